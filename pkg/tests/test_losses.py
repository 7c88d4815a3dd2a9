import math

import pytest
import torch

from mvfad.errors import NumericDegeneracyError
from mvfad.losses import contrastive_losses, cosine_similarity, seg_loss, total_loss

C = 12


def randn(*shape, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def unit(i):
    v = torch.zeros(1, C, dtype=torch.float64)
    v[0, i] = 1.0
    return v


class TestContrastiveLosses:
    def test_identical_embeddings_give_two_ln_two(self):
        # All similarities are 1, so each of the four log terms is ln 2.
        v = randn(1, C, seed=1)
        l_i2t, l_t2i, l_con = contrastive_losses(v, v.clone(), v.clone(), v.clone())
        assert float(l_i2t) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)
        assert float(l_t2i) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)
        assert float(l_con) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)

    def test_aligned_pairs_orthogonal_cross(self):
        # Positive-pair similarity 1, all cross-similarities 0: every term is
        # -log(e / (e + 1)) = softplus(-1).
        l_i2t, l_t2i, l_con = contrastive_losses(unit(0), unit(1), unit(0), unit(1))
        expected = 2.0 * math.log1p(math.exp(-1.0))
        assert float(l_i2t) == pytest.approx(expected, abs=1e-9)
        assert float(l_t2i) == pytest.approx(expected, abs=1e-9)
        assert float(l_con) == pytest.approx(expected, abs=1e-9)
        assert float(l_con) == pytest.approx(0.6266, abs=1e-4)

    def test_swap_symmetry(self):
        i_p, i_m = randn(1, C, seed=2), randn(1, C, seed=3)
        t_p, t_m = randn(1, C, seed=4), randn(1, C, seed=5)
        a = contrastive_losses(i_p, i_m, t_p, t_m)
        b = contrastive_losses(i_m, i_p, t_m, t_p)
        for x, y in zip(a, b):
            assert float(x) == pytest.approx(float(y), abs=1e-12)

    def test_combined_is_exact_mean(self):
        for seed in range(5):
            l_i2t, l_t2i, l_con = contrastive_losses(
                randn(1, C, seed=seed), randn(1, C, seed=seed + 10),
                randn(1, C, seed=seed + 20), randn(1, C, seed=seed + 30))
            assert float(l_con) == (float(l_i2t) + float(l_t2i)) / 2.0

    def test_nonnegative(self):
        for seed in range(10):
            losses = contrastive_losses(
                randn(1, C, seed=seed), randn(1, C, seed=seed + 40),
                randn(1, C, seed=seed + 50), randn(1, C, seed=seed + 60))
            assert all(float(l) >= 0.0 for l in losses)

    def test_zero_norm_embedding_rejected(self):
        z = torch.zeros(1, C, dtype=torch.float64)
        with pytest.raises(NumericDegeneracyError):
            contrastive_losses(z, randn(1, C, seed=6), randn(1, C, seed=7), randn(1, C, seed=8))


class TestCosineSimilarity:
    def test_known_values(self):
        assert float(cosine_similarity(unit(0), unit(0))) == pytest.approx(1.0)
        assert float(cosine_similarity(unit(0), unit(1))) == pytest.approx(0.0)
        assert float(cosine_similarity(unit(0), -unit(0))) == pytest.approx(-1.0)


class TestSegLoss:
    def test_perfect_prediction(self):
        mask = (randn(10, 10, seed=9) > 0).double()
        assert float(seg_loss(mask.clone(), mask)) <= 1e-5

    def test_uniform_half_gives_ln_two(self):
        for seed in (10, 11):
            mask = (randn(8, 8, seed=seed) > 0).double()
            s_map = torch.full((8, 8), 0.5, dtype=torch.float64)
            assert float(seg_loss(s_map, mask)) == pytest.approx(math.log(2.0), abs=1e-9)

    def test_inverted_prediction_is_maximal(self):
        mask = (randn(8, 8, seed=12) > 0).double()
        loss = float(seg_loss(1.0 - mask, mask))
        assert loss == pytest.approx(-math.log(1e-7), rel=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            seg_loss(torch.zeros(4, 4), torch.zeros(4, 5))


class TestTotalLoss:
    def test_trivial_sums(self):
        assert float(total_loss(torch.tensor(0.0), torch.tensor(0.0))) == 0.0
        assert float(total_loss(torch.tensor(1.0), torch.tensor(0.5))) == 1.5

    def test_matches_breakdown_invariant_on_random_inputs(self):
        for seed in range(5):
            l_con = float(randn(1, seed=seed).abs())
            l_seg = float(randn(1, seed=seed + 70).abs())
            assert total_loss(l_con, l_seg) == l_con + l_seg
