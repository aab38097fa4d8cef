"""Loss families and their parameter gradients.

``robust`` is the gradient-norm penalised loss ``L + lam * ||grad L||``. Its
default update direction for the penalty is ``grad L / ||grad L||`` (first
order only). ``exact_penalty_grad`` switches to the true derivative
``H grad L / ||grad L||``, with the Hessian-vector product taken by central
differences of the gradient along ``grad L / ||grad L||``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core_math import Rng
from .model import MlpParams, backward_mse, flatten, forward, unflatten
from .perturb import NoiseSpec, perturb_flat, mse_objective

FAMILIES = ("mse", "robust", "l1", "lipschitz", "noise_aware")

# below this gradient norm the penalty direction is taken as zero
EPS_GRAD = 1e-12


@dataclass(frozen=True)
class LossSpec:
    family: str = "mse"
    lam: float = 0.0
    power_iters: int = 20
    power_seed: int = 0
    noise: Optional[NoiseSpec] = None
    exact_penalty_grad: bool = False
    hvp_step: float = 1e-4

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.power_iters < 1:
            raise ValueError(f"power_iters must be >= 1, got {self.power_iters}")
        if self.family == "noise_aware" and self.noise is None:
            raise ValueError("noise_aware loss needs a NoiseSpec")


@dataclass
class LossEval:
    total: float
    data_term: float
    penalty_term: float
    grad: np.ndarray
    lam: float = 0.0


def _check_dataset(params: MlpParams, dataset) -> None:
    coords, targets = dataset.coords, dataset.targets
    if coords.shape[0] == 0:
        raise ValueError("dataset is empty")
    cfg = params.config
    if coords.shape[1] != cfg.in_dim or targets.shape[1] != cfg.out_dim:
        raise ValueError(
            f"dataset dims ({coords.shape[1]} -> {targets.shape[1]}) do not match "
            f"model ({cfg.in_dim} -> {cfg.out_dim})"
        )


def _mse_and_grad(params: MlpParams, dataset) -> tuple[float, np.ndarray]:
    _, cache = forward(params, dataset.coords)
    grad, loss = backward_mse(params, cache, dataset.coords, dataset.targets)
    return loss, flatten(grad)


def eval_mse(params: MlpParams, dataset) -> LossEval:
    _check_dataset(params, dataset)
    loss, grad = _mse_and_grad(params, dataset)
    return LossEval(loss, loss, 0.0, grad)


def eval_perturbed_mse(params: MlpParams, noise: NoiseSpec, dataset, rng: Optional[Rng] = None) -> float:
    _check_dataset(params, dataset)
    if noise.strength == 0:
        return eval_mse(params, dataset).total
    mask = params.weight_mask() if noise.scope == "weights_only" else None
    noisy = perturb_flat(flatten(params), noise, rng, mask)
    out, _ = forward(unflatten(params.config, noisy), dataset.coords)
    resid = out - dataset.targets
    return float(np.sum(resid * resid) / out.shape[0])


def penalty_direction(grad: np.ndarray) -> np.ndarray:
    """``grad / ||grad||``, or zeros when the norm is below ``EPS_GRAD``."""
    gnorm = float(np.linalg.norm(grad))
    if gnorm < EPS_GRAD:
        return np.zeros_like(grad)
    return grad / gnorm


def exact_penalty_gradient(params: MlpParams, dataset, grad: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """True gradient of ``||grad L||`` via a finite-difference Hessian-vector product."""
    u = penalty_direction(grad)
    if not u.any():
        return u
    objective = mse_objective(params, dataset)
    theta = flatten(params)
    _, gp = objective(theta + step * u)
    _, gm = objective(theta - step * u)
    return (gp - gm) / (2.0 * step)


def eval_robust(params: MlpParams, dataset, lam: float, exact: bool = False, hvp_step: float = 1e-4) -> LossEval:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    _check_dataset(params, dataset)
    loss, grad = _mse_and_grad(params, dataset)
    gnorm = float(np.linalg.norm(grad))
    if lam == 0:
        return LossEval(loss, loss, gnorm, grad, 0.0)
    if exact:
        pgrad = exact_penalty_gradient(params, dataset, grad, hvp_step)
    else:
        pgrad = penalty_direction(grad)
    return LossEval(loss + lam * gnorm, loss, gnorm, grad + lam * pgrad, lam)


def eval_l1(params: MlpParams, dataset, lam: float) -> LossEval:
    _check_dataset(params, dataset)
    loss, grad = _mse_and_grad(params, dataset)
    theta = flatten(params)
    penalty = float(np.sum(np.abs(theta)))
    if lam == 0:
        return LossEval(loss, loss, penalty, grad, 0.0)
    return LossEval(loss + lam * penalty, loss, penalty, grad + lam * np.sign(theta), lam)


def spectral_norm(w: np.ndarray, iters: int, seed: int = 0) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest singular value by power iteration. Returns ``(sigma, u, v)``."""
    v = Rng(seed).normal(w.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        v = w.T @ (w @ v)
        nv = np.linalg.norm(v)
        if nv == 0:
            return 0.0, np.zeros(w.shape[0]), np.zeros(w.shape[1])
        v /= nv
    wv = w @ v
    sigma = float(np.linalg.norm(wv))
    if sigma == 0:
        return 0.0, np.zeros(w.shape[0]), v
    return sigma, wv / sigma, v


def lipschitz_penalty(params: MlpParams, iters: int = 20, seed: int = 0) -> tuple[float, MlpParams]:
    """Sum of squared per-layer spectral norms and its gradient (biases get zero)."""
    total = 0.0
    layers = []
    for l, (w, b) in enumerate(params.layers):
        sigma, u, v = spectral_norm(w, iters, seed + l)
        total += sigma * sigma
        layers.append((2.0 * sigma * np.outer(u, v), np.zeros_like(b)))
    return total, MlpParams(params.config, layers)


def eval_lipschitz(params: MlpParams, dataset, lam: float, iters: int = 20, seed: int = 0) -> LossEval:
    _check_dataset(params, dataset)
    loss, grad = _mse_and_grad(params, dataset)
    penalty, pgrad = lipschitz_penalty(params, iters, seed)
    if lam == 0:
        return LossEval(loss, loss, penalty, grad, 0.0)
    return LossEval(loss + lam * penalty, loss, penalty, grad + lam * flatten(pgrad), lam)


def noise_aware_grad(params: MlpParams, noise: NoiseSpec, dataset, rng: Optional[Rng] = None) -> LossEval:
    """Loss and gradient at a noisy copy of the weights, used as-is for the clean weights."""
    _check_dataset(params, dataset)
    if noise.strength == 0:
        return eval_mse(params, dataset)
    mask = params.weight_mask() if noise.scope == "weights_only" else None
    noisy = unflatten(params.config, perturb_flat(flatten(params), noise, rng, mask))
    loss, grad = _mse_and_grad(noisy, dataset)
    return LossEval(loss, loss, 0.0, grad)


def evaluate(spec: LossSpec, params: MlpParams, dataset, rng: Optional[Rng] = None) -> LossEval:
    """Dispatch on ``spec.family``. ``rng`` feeds the noise-aware draws."""
    if spec.family == "mse":
        return eval_mse(params, dataset)
    if spec.family == "robust":
        return eval_robust(params, dataset, spec.lam, spec.exact_penalty_grad, spec.hvp_step)
    if spec.family == "l1":
        return eval_l1(params, dataset, spec.lam)
    if spec.family == "lipschitz":
        return eval_lipschitz(params, dataset, spec.lam, spec.power_iters, spec.power_seed)
    return noise_aware_grad(params, spec.noise, dataset, rng)
