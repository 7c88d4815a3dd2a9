import pytest

from mvfad.training import GRAD_CHECK_COMPONENTS, grad_check


@pytest.mark.parametrize("component", GRAD_CHECK_COMPONENTS)
def test_component_passes_finite_difference_check(component):
    result = grad_check(component, joint_dim=16, feature_dim=16, n_patches=16, eps=1e-5)
    assert result.max_rel_err is not None
    assert result.max_rel_err <= 1e-4, f"{component}: {result.max_rel_err:.3e}"
    assert result.checked_coords > 0
    assert result.passed


def test_frozen_encoder_reports_nothing_to_check():
    result = grad_check("encoder")
    assert result.max_rel_err is None
    assert result.checked_coords == 0
    assert "no trainable parameters" in result.message


def test_unknown_component_rejected():
    with pytest.raises(ValueError):
        grad_check("nonexistent_component")


def test_deterministic_across_runs():
    a = grad_check("image_adapter", joint_dim=16, feature_dim=16, n_patches=16)
    b = grad_check("image_adapter", joint_dim=16, feature_dim=16, n_patches=16)
    assert a.max_rel_err == b.max_rel_err
