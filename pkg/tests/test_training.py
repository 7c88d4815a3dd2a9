import numpy as np
import pytest
import torch

from mvfad.encoder import EncoderConfig, default_prompt_set
from mvfad.errors import TrainingDivergedError
from mvfad.model import AnomalyDetectionModel, ModelConfig
from mvfad.training import StepInputs, TrainConfig, build_optimizer, compute_losses, train_step

SMALL_ENCODER = EncoderConfig(image_size=64, patch_size=16, depth=4, feature_dim=16,
                              joint_dim=16, stage_set=(2, 3, 4), weight_seed=11)


def small_model(seed=0, use_multiview=True):
    model = AnomalyDetectionModel(ModelConfig(
        encoder=SMALL_ENCODER, seed=seed, use_multiview=use_multiview, num_views=5))
    model.set_prompts(default_prompt_set("normal"), default_prompt_set("anomalous"))
    return model


def make_inputs(model, seed=0, use_views=True):
    rng = np.random.default_rng(seed)
    img_plus = rng.random((64, 64, 3))
    img_minus = img_plus.copy()
    mask = np.zeros((64, 64))
    mask[20:40, 24:44] = 1.0
    img_minus[mask > 0] = 0.3 * img_minus[mask > 0] + 0.7 * rng.random((3,))
    views_plus = views_minus = None
    if use_views:
        views_plus = [model.encoder.encode_image(rng.random((64, 64, 3))) for _ in range(5)]
        views_minus = [model.encoder.encode_image(rng.random((64, 64, 3))) for _ in range(5)]
    return StepInputs(
        bundle_plus=model.encoder.encode_image(img_plus),
        bundle_minus=model.encoder.encode_image(img_minus),
        mask=mask,
        views_plus=views_plus,
        views_minus=views_minus,
    )


class TestTrainConfig:
    def test_invalid_k_shot_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(k_shot=3)

    def test_invalid_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_nonpositive_lr_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(lr_decoder=0.0)

    def test_paper_defaults(self):
        cfg = TrainConfig()
        assert (cfg.lr_class_text, cfg.lr_seg_text, cfg.lr_image_adapter,
                cfg.lr_decoder, cfg.lr_fusion) == (1e-5, 5e-5, 5e-4, 5e-4, 1e-4)
        assert cfg.view_indices == (5, 9, 14, 19, 27)


class TestBuildOptimizer:
    def test_per_module_learning_rates(self):
        model = small_model()
        opt = build_optimizer(model, TrainConfig())
        lrs = {g["name"]: g["lr"] for g in opt.param_groups}
        assert lrs == {
            "class_text_adapter": 1e-5,
            "seg_text_adapter": 5e-5,
            "image_adapter": 5e-4,
            "decoder": 5e-4,
            "global_fusion": 1e-4,
            "local_fusion": 1e-4,
        }

    def test_no_fusion_groups_without_multiview(self):
        model = small_model(use_multiview=False)
        opt = build_optimizer(model, TrainConfig())
        names = {g["name"] for g in opt.param_groups}
        assert "global_fusion" not in names and "local_fusion" not in names

    def test_encoder_parameters_excluded(self):
        model = small_model()
        opt = build_optimizer(model, TrainConfig())
        opt_params = {id(p) for g in opt.param_groups for p in g["params"]}
        assert all(id(p) not in opt_params for p in model.encoder.parameters())


class TestTrainStep:
    def test_overfit_smoke_50_steps(self):
        model = small_model(seed=1)
        opt = build_optimizer(model, TrainConfig())
        inputs = make_inputs(model, seed=1)
        history = [train_step(model, opt, inputs) for _ in range(50)]
        assert history[-1].l_tot < history[0].l_tot
        assert np.median([h.l_tot for h in history[40:50]]) < \
            np.median([h.l_tot for h in history[0:10]])

    def test_breakdown_invariants(self):
        model = small_model(seed=2)
        opt = build_optimizer(model, TrainConfig())
        inputs = make_inputs(model, seed=2)
        for _ in range(3):
            b = train_step(model, opt, inputs)
            assert b.l_con == (b.l_i2t + b.l_t2i) / 2.0
            assert b.l_tot == b.l_seg + b.l_con
            assert b.l_con >= 0.0 and b.l_seg >= 0.0

    def test_encoder_frozen_through_training(self):
        model = small_model(seed=3)
        before = model.encoder_checksum()
        opt = build_optimizer(model, TrainConfig())
        inputs = make_inputs(model, seed=3)
        for _ in range(5):
            train_step(model, opt, inputs)
        assert model.encoder_checksum() == before

    def test_trainable_parameters_change(self):
        model = small_model(seed=4)
        before = model.trainable_checksum()
        opt = build_optimizer(model, TrainConfig())
        train_step(model, opt, make_inputs(model, seed=4))
        assert model.trainable_checksum() != before

    def test_deterministic_across_runs(self):
        checksums = []
        for _ in range(2):
            model = small_model(seed=5)
            opt = build_optimizer(model, TrainConfig())
            inputs = make_inputs(model, seed=5)
            for _ in range(3):
                train_step(model, opt, inputs)
            checksums.append(model.trainable_checksum())
        assert checksums[0] == checksums[1]

    def test_no_multiview_step_runs(self):
        model = small_model(seed=6, use_multiview=False)
        opt = build_optimizer(model, TrainConfig())
        b = train_step(model, opt, make_inputs(model, seed=6, use_views=False))
        assert np.isfinite(b.l_tot)

    def test_nonfinite_loss_aborts_with_term_name(self):
        model = small_model(seed=7)
        with torch.no_grad():
            model.image_adapter.mlp[0].weight.fill_(float("nan"))
        with pytest.raises(TrainingDivergedError, match="l_i2t"):
            compute_losses(model, make_inputs(model, seed=7))
