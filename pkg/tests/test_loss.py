import numpy as np
import pytest

from conftest import toy_problem
from robust_inr.core_math import Rng, finite_difference_gradient
from robust_inr.data_io import CoordinateDataset
from robust_inr.loss import (
    EPS_GRAD,
    LossSpec,
    eval_l1,
    eval_lipschitz,
    eval_mse,
    eval_perturbed_mse,
    eval_robust,
    evaluate,
    exact_penalty_gradient,
    lipschitz_penalty,
    noise_aware_grad,
    spectral_norm,
)
from robust_inr.model import MlpParams, SirenConfig, flatten, forward, unflatten
from robust_inr.perturb import NoiseSpec, perturb


def zero_net(m=1):
    cfg = SirenConfig(1, m, 3, 1)
    return unflatten(cfg, np.zeros(cfg.num_params))


def test_mse_perfect_fit():
    ds = CoordinateDataset(np.array([[-1.0], [1.0]]), np.zeros((2, 1)), (2,), "audio")
    assert eval_mse(zero_net(), ds).total == 0.0


def test_mse_direct_arithmetic():
    ds = CoordinateDataset(np.array([[-1.0], [1.0]]), np.array([[1.0], [0.0]]), (2,), "audio")
    ev = eval_mse(zero_net(), ds)
    assert ev.total == 0.5 and ev.data_term == 0.5 and ev.penalty_term == 0.0


def test_mse_matches_per_sample_loop():
    _, p, ds = toy_problem(1, out_dim=3, batch=12)
    total = 0.0
    for x, y in zip(ds.coords, ds.targets):
        out, _ = forward(p, x[None, :])
        total += float(np.sum((out[0] - y) ** 2))
    assert eval_mse(p, ds).total == pytest.approx(total / 12, rel=1e-12)


def test_mse_empty_dataset():
    ds = CoordinateDataset(np.zeros((0, 1)), np.zeros((0, 1)), (0,), "audio")
    with pytest.raises(ValueError, match="empty"):
        eval_mse(zero_net(), ds)


def test_perturbed_zero_strength_equals_clean(toy):
    _, p, ds = toy
    for fam in ("gaussian_mult", "gaussian_add", "binary_mask"):
        assert eval_perturbed_mse(p, NoiseSpec(fam, 0.0), ds) == eval_mse(p, ds).total


def test_perturbed_deterministic_and_nonmutating(toy):
    _, p, ds = toy
    before = flatten(p).tobytes()
    spec = NoiseSpec("gaussian_mult", 0.05, seed=3)
    assert eval_perturbed_mse(p, spec, ds) == eval_perturbed_mse(p, spec, ds)
    assert flatten(p).tobytes() == before


def test_perturbed_taylor_gap_monte_carlo(toy):
    _, p, ds = toy
    ev = eval_mse(p, ds)
    gnorm = np.linalg.norm(ev.grad)
    theta = flatten(p)
    gaps, first, sq = [], [], []
    for t in range(100):
        spec = NoiseSpec("gaussian_mult", 1e-3, seed=t)
        delta = flatten(perturb(p, spec)) - theta
        gaps.append(abs(eval_perturbed_mse(p, spec, ds) - ev.total))
        first.append(gnorm * np.linalg.norm(delta))
        sq.append(float(delta @ delta))
    gaps, first, sq = map(np.array, (gaps, first, sq))
    # fit C on the first half, verify on the second half with a 2x margin
    c = max(0.0, np.max((gaps[:50] - first[:50]) / sq[:50]))
    assert np.all(gaps[50:] <= first[50:] + 2 * c * sq[50:] + 1e-15)


def test_robust_lambda_zero_equals_mse(toy):
    _, p, ds = toy
    a, b = eval_robust(p, ds, 0.0), eval_mse(p, ds)
    assert a.total == b.total
    assert np.array_equal(a.grad, b.grad)


def test_robust_total_decomposition(toy):
    _, p, ds = toy
    ev = eval_robust(p, ds, 0.3)
    mse = eval_mse(p, ds)
    assert ev.data_term == mse.total
    assert ev.penalty_term == pytest.approx(np.linalg.norm(mse.grad), rel=1e-15)
    assert ev.total == pytest.approx(ev.data_term + 0.3 * ev.penalty_term, rel=1e-15)
    assert ev.total > mse.total


def test_robust_guard_at_perfect_fit():
    _, p, ds = toy_problem(2)
    out, _ = forward(p, ds.coords)
    fitted = CoordinateDataset(ds.coords, out, ds.shape, ds.modality)
    ev = eval_robust(p, fitted, 0.5)
    assert np.linalg.norm(eval_mse(p, fitted).grad) < EPS_GRAD
    assert not ev.grad.any()
    assert ev.total == eval_mse(p, fitted).total


@pytest.mark.parametrize("seed", range(25))
def test_penalty_direction_unit_norm(seed):
    _, p, ds = toy_problem(seed, batch=5)
    lam = 0.01 + Rng(seed).uniform(1)[0]
    ev = eval_robust(p, ds, lam)
    g = eval_mse(p, ds).grad
    assert abs(np.linalg.norm((ev.grad - g) / lam) - 1.0) < 1e-9
    # and points along grad L
    np.testing.assert_allclose((ev.grad - g) / lam, g / np.linalg.norm(g), atol=1e-12)


def test_exact_penalty_gradient_matches_fd_of_gradient_norm():
    cfg, p, ds = toy_problem(5, width=4, layers=1, batch=6)

    def gnorm(theta):
        return float(np.linalg.norm(eval_mse(unflatten(cfg, theta), ds).grad))

    fd = finite_difference_gradient(gnorm, flatten(p), 1e-5)
    hvp = exact_penalty_gradient(p, ds, eval_mse(p, ds).grad, 1e-5)
    np.testing.assert_allclose(hvp, fd, rtol=1e-4, atol=1e-6)
    ev = eval_robust(p, ds, 0.2, exact=True, hvp_step=1e-5)
    np.testing.assert_allclose(ev.grad, eval_mse(p, ds).grad + 0.2 * fd, rtol=1e-4, atol=1e-6)


def test_robust_descent_sanity():
    _, p, ds = toy_problem(11)
    lam = 0.1
    start = eval_robust(p, ds, lam)
    theta = flatten(p)
    improved = False
    for lr in np.geomspace(1e-1, 1e-6, 10):
        trial = unflatten(p.config, theta - lr * start.grad)
        if eval_robust(trial, ds, lam).total < start.total:
            improved = True
            break
    assert improved


def test_robust_rejects_negative_lambda(toy):
    _, p, ds = toy
    with pytest.raises(ValueError):
        eval_robust(p, ds, -1.0)


def test_l1_lambda_zero(toy):
    _, p, ds = toy
    assert eval_l1(p, ds, 0.0).total == eval_mse(p, ds).total
    assert np.array_equal(eval_l1(p, ds, 0.0).grad, eval_mse(p, ds).grad)


def test_l1_definition():
    cfg = SirenConfig(1, 1, 1, 1)  # d = 4: w0, b0, w1, b1
    p = unflatten(cfg, np.array([1.0, -2.0, 0.0, 0.0]))
    ds = CoordinateDataset(np.array([[0.0]]), np.array([[0.0]]), (1,), "audio")
    ev = eval_l1(p, ds, 1.0)
    assert ev.penalty_term == 3.0
    np.testing.assert_array_equal(ev.grad - eval_mse(p, ds).grad, [1.0, -1.0, 0.0, 0.0])


def test_l1_matches_loop(toy):
    _, p, ds = toy
    assert eval_l1(p, ds, 0.2).penalty_term == pytest.approx(sum(abs(x) for x in flatten(p)), rel=1e-12)


def test_l1_penalty_gradient_fd():
    cfg, p, ds = toy_problem(12)
    theta = flatten(p)
    keep = np.abs(theta) > 0.1
    fd = finite_difference_gradient(lambda t: float(np.abs(t).sum()), theta, 1e-6)
    pen = (eval_l1(p, ds, 1.0).grad - eval_mse(p, ds).grad)
    np.testing.assert_allclose(pen[keep], fd[keep], atol=1e-8)


def test_spectral_norm_diagonal():
    sigma, _, _ = spectral_norm(np.diag([3.0, 1.0]), 20)
    assert sigma == pytest.approx(3.0, abs=1e-9)


def test_spectral_norm_matches_svd():
    w = Rng(8).normal(64).reshape(8, 8)
    sigma, _, _ = spectral_norm(w, 200)
    assert abs(sigma - np.linalg.svd(w, compute_uv=False)[0]) < 1e-6


def test_lipschitz_zero_weights():
    cfg = SirenConfig(2, 1, 4, 2)
    p = unflatten(cfg, np.zeros(cfg.num_params))
    pen, grad = lipschitz_penalty(p)
    assert pen == 0.0 and not flatten(grad).any()


def test_lipschitz_penalty_diag():
    cfg = SirenConfig(2, 2, 2, 1)
    p = MlpParams(cfg, [(np.diag([3.0, 1.0]), np.zeros(2)), (np.zeros((2, 2)), np.zeros(2))])
    pen, _ = lipschitz_penalty(p, 30)
    assert pen == pytest.approx(9.0, abs=1e-9)


def test_lipschitz_gradient_fd():
    cfg, p, ds = toy_problem(13, width=5, layers=2)
    iters = 300
    fd = finite_difference_gradient(lambda t: lipschitz_penalty(unflatten(cfg, t), iters)[0], flatten(p), 1e-6)
    _, grad = lipschitz_penalty(p, iters)
    np.testing.assert_allclose(flatten(grad), fd, atol=1e-6)
    ev = eval_lipschitz(p, ds, 0.5, iters)
    np.testing.assert_allclose(ev.grad, eval_mse(p, ds).grad + 0.5 * fd, atol=1e-6)


def test_noise_aware_zero_strength(toy):
    _, p, ds = toy
    ev = noise_aware_grad(p, NoiseSpec("gaussian_mult", 0.0), ds, Rng(0))
    assert ev.total == eval_mse(p, ds).total and np.array_equal(ev.grad, eval_mse(p, ds).grad)


def test_noise_aware_deterministic_and_matches_perturbed(toy):
    _, p, ds = toy
    spec = NoiseSpec("gaussian_mult", 0.05)
    totals, perturbed = [], []
    for s in range(500):
        totals.append(noise_aware_grad(p, spec, ds, Rng(s)).total)
        perturbed.append(eval_perturbed_mse(p, spec.with_seed(s), ds))
    assert totals == perturbed
    assert noise_aware_grad(p, spec, ds, Rng(3)).grad.tobytes() == noise_aware_grad(p, spec, ds, Rng(3)).grad.tobytes()


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec("hinge")
    with pytest.raises(ValueError):
        LossSpec("robust", lam=-0.1)
    with pytest.raises(ValueError):
        LossSpec("noise_aware")


def test_evaluate_dispatch(toy):
    _, p, ds = toy
    assert evaluate(LossSpec("robust", 0.1), p, ds).total == eval_robust(p, ds, 0.1).total
    assert evaluate(LossSpec("l1", 0.1), p, ds).total == eval_l1(p, ds, 0.1).total
    assert evaluate(LossSpec("lipschitz", 0.1), p, ds).total == eval_lipschitz(p, ds, 0.1).total
    na = LossSpec("noise_aware", noise=NoiseSpec("binary_mask", 0.2))
    assert evaluate(na, p, ds, Rng(4)).total == noise_aware_grad(p, na.noise, ds, Rng(4)).total
