import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import toy_problem
from robust_inr.core_math import Rng
from robust_inr.model import SirenConfig, flatten, unflatten
from robust_inr.perturb import (
    NoiseSpec,
    fit_remainder_constant,
    perturb,
    perturb_flat,
    taylor_gap,
    taylor_gap_trials,
)

FAMILIES = ["gaussian_mult", "gaussian_add", "binary_mask"]


@pytest.mark.parametrize("family", FAMILIES)
def test_zero_strength_is_identity(family, toy):
    _, p, _ = toy
    out = perturb(p, NoiseSpec(family, 0.0, seed=5))
    assert flatten(out).tobytes() == flatten(p).tobytes()


def test_full_mask_zeroes_everything(toy):
    _, p, _ = toy
    assert not flatten(perturb(p, NoiseSpec("binary_mask", 1.0))).any()


def test_weights_only_leaves_biases(toy):
    _, p, _ = toy
    out = perturb(p, NoiseSpec("binary_mask", 1.0, scope="weights_only"))
    for (w, b), (w0, b0) in zip(out.layers, p.layers):
        assert not w.any()
        assert np.array_equal(b, b0)


def test_gaussian_mult_relative_std():
    theta = Rng(1).normal(100_000) + 3.0
    noisy = perturb_flat(theta, NoiseSpec("gaussian_mult", 0.01, seed=2))
    rel = (noisy - theta) / theta
    assert 0.0097 <= rel.std() <= 0.0103


def test_gaussian_add_std():
    theta = np.zeros(100_000)
    noisy = perturb_flat(theta, NoiseSpec("gaussian_add", 0.01, seed=2))
    assert 0.0097 <= noisy.std() <= 0.0103


def test_gaussian_mult_keeps_zeros():
    theta = np.array([0.0, 1.0, 0.0, -2.0])
    noisy = perturb_flat(theta, NoiseSpec("gaussian_mult", 0.5, seed=1))
    assert noisy[0] == 0.0 and noisy[2] == 0.0


def test_mask_positions_independent_of_values():
    spec = NoiseSpec("binary_mask", 0.3, seed=9)
    a = perturb_flat(np.ones(500), spec)
    b = perturb_flat(np.linspace(1, 2, 500), spec)
    assert np.array_equal(a == 0, b == 0)


def test_invalid_specs():
    with pytest.raises(ValueError):
        NoiseSpec("binary_mask", 1.5)
    with pytest.raises(ValueError):
        NoiseSpec("gaussian_mult", -1.0)
    with pytest.raises(ValueError):
        NoiseSpec("uniform", 0.1)
    with pytest.raises(ValueError):
        NoiseSpec(scope="biases")


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(FAMILIES), st.floats(0.0, 1.0), st.integers(0, 2**63), st.sampled_from(["all_params", "weights_only"]))
def test_nonmutating_and_deterministic(family, strength, seed, scope):
    _, p, _ = toy_problem(1)
    before = flatten(p).copy()
    spec = NoiseSpec(family, strength, scope, seed)
    a, b = perturb(p, spec), perturb(p, spec)
    assert np.array_equal(flatten(p), before)
    assert flatten(a).tobytes() == flatten(b).tobytes()


def test_taylor_gap_zero_strength(toy):
    _, p, ds = toy
    assert taylor_gap(p, NoiseSpec("gaussian_add", 0.0), ds, trials=5) == [(0.0, 0.0)] * 5


def test_taylor_gap_quadratic_toy():
    cfg = SirenConfig(2, 1, 4, 1)
    p = unflatten(cfg, Rng(3).normal(cfg.num_params))

    def half_norm_sq(theta):
        return 0.5 * float(theta @ theta), theta.copy()

    spec = NoiseSpec("gaussian_add", 0.1, seed=4)
    dl, bound, dn = taylor_gap_trials(p, spec, trials=50, objective=half_norm_sq)
    # exact expansion: L(t+d) - L(t) = t.d + |d|^2/2
    assert np.all(bound >= dl - 0.5 * dn ** 2 - 1e-12)
    assert fit_remainder_constant(dl, bound, dn) <= 0.5 + 1e-12


def test_taylor_gap_trials_validation(toy):
    _, p, ds = toy
    with pytest.raises(ValueError):
        taylor_gap(p, NoiseSpec(), ds, trials=0)


def test_fit_remainder_constant():
    assert fit_remainder_constant([1.0, 3.0], [1.0, 1.0], [1.0, 2.0]) == 0.5
    assert fit_remainder_constant([0.0], [1.0], [1.0]) == 0.0
