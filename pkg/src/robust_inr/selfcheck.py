"""Embedded verification battery run by ``robust-inr selfcheck``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core_math import Rng, finite_difference_gradient, gradient_check_error
from .data_io import CoordinateDataset, weights_from_bytes, weights_to_bytes
from .loss import eval_robust
from .model import SirenConfig, backward_mse, flatten, forward, init_siren, unflatten
from .perturb import NoiseSpec, fit_remainder_constant, taylor_gap_trials
from .train_eval import psnr

# xoshiro256** seeded by SplitMix64(0), first outputs
RNG_REFERENCE = (0x99EC5F36CB75F2B4, 0xBF6E1F784956452A, 0x1A5F849D4933E6E0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _toy_problem(seed: int, width: int = 6, layers: int = 2, batch: int = 8, omega: float = 2.0):
    rng = Rng(seed)
    cfg = SirenConfig(2, 1, width, layers, omega, omega)
    params = unflatten(cfg, 0.5 * rng.normal(cfg.num_params))
    coords = 2.0 * rng.uniform(batch * 2).reshape(batch, 2) - 1.0
    targets = 2.0 * rng.uniform(batch).reshape(batch, 1) - 1.0
    ds = CoordinateDataset(coords, targets, (batch,), "audio")
    return cfg, params, ds


def check_grad_fd(backward: Callable = backward_mse, cases: int = 5) -> CheckResult:
    worst = 0.0
    for s in range(cases):
        cfg, params, ds = _toy_problem(100 + s)
        _, cache = forward(params, ds.coords)
        grad, _ = backward(params, cache, ds.coords, ds.targets)

        def f(theta):
            p = unflatten(cfg, theta)
            out, c = forward(p, ds.coords)
            return backward_mse(p, c, ds.coords, ds.targets)[1]

        fd = finite_difference_gradient(f, flatten(params), 1e-4, extrapolate=True)
        worst = max(worst, gradient_check_error(flatten(grad), fd, floor_frac=0.0))
    return CheckResult("grad-fd", worst < 1e-6, f"max rel err {worst:.2e}")


def check_eq9_unit_norm(backward: Callable = backward_mse, cases: int = 20) -> CheckResult:
    worst = 0.0
    for s in range(cases):
        _, params, ds = _toy_problem(200 + s)
        lam = 0.05 + 0.1 * s
        ev = eval_robust(params, ds, lam)
        _, cache = forward(params, ds.coords)
        g = flatten(backward(params, cache, ds.coords, ds.targets)[0])
        worst = max(worst, abs(np.linalg.norm((ev.grad - g) / lam) - 1.0))
    return CheckResult("eq9-unit-norm", worst < 1e-9, f"max |norm - 1| {worst:.2e}")


def check_taylor_gap() -> CheckResult:
    """Remainder constant fitted at one noise level must cover half that level."""
    _, params, ds = _toy_problem(300)
    spec = NoiseSpec("gaussian_mult", 2e-3, seed=7)
    dl, bound, dn = taylor_gap_trials(params, spec, ds, trials=30)
    c = fit_remainder_constant(dl, bound, dn)
    dl2, bound2, dn2 = taylor_gap_trials(params, NoiseSpec("gaussian_mult", 1e-3, seed=7), ds, trials=30)
    holds = bool(np.all(dl2 <= bound2 + c * dn2 ** 2 * (1 + 1e-9) + 1e-15))
    r1 = np.median(dl) / np.median(bound)
    r2 = np.median(dl2) / np.median(bound2)
    return CheckResult("taylor-gap", holds and r2 <= r1 * 1.05,
                       f"C={c:.3g}, median gap ratio {r1:.3f} -> {r2:.3f}")


def check_psnr_analytic() -> CheckResult:
    t = np.linspace(0.1, 0.8, 50)
    ok = math.isinf(psnr(t, t)) and abs(psnr(t + 0.1, t) - 20.0) < 1e-9
    ok = ok and abs(psnr(t + 0.01, t) - 40.0) < 1e-9
    return CheckResult("psnr-analytic", ok, "inf sentinel, 20 dB and 40 dB cases")


def check_rng_reference() -> CheckResult:
    got = tuple(int(v) for v in Rng(0).u64_array(3))
    return CheckResult("rng-reference", got == RNG_REFERENCE, "xoshiro256** seed 0 stream")


def check_weights_roundtrip() -> CheckResult:
    params = init_siren(SirenConfig(2, 3, 8, 2), seed=5)
    back = weights_from_bytes(weights_to_bytes(params, "f64"))
    ok = flatten(back).tobytes() == flatten(params).tobytes()
    return CheckResult("weights-roundtrip", ok, "f64 bit-exact")


def run_checks(backward: Callable = backward_mse) -> list[CheckResult]:
    checks = [
        lambda: check_grad_fd(backward),
        lambda: check_eq9_unit_norm(backward),
        check_taylor_gap,
        check_psnr_analytic,
        check_rng_reference,
        check_weights_roundtrip,
    ]
    results = []
    for chk in checks:
        try:
            results.append(chk())
        except Exception as exc:
            name = getattr(chk, "__name__", "check")
            results.append(CheckResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return results
