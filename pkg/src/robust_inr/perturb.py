"""Weight perturbation models and the first-order Taylor-gap diagnostic."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core_math import Rng
from .model import MlpParams, backward_mse, flatten, forward, unflatten

FAMILIES = ("gaussian_mult", "gaussian_add", "binary_mask")
SCOPES = ("all_params", "weights_only")


@dataclass(frozen=True)
class NoiseSpec:
    """How to corrupt a parameter vector.

    ``strength`` is the noise std for the gaussian families and the zeroing
    probability for ``binary_mask``.
    """

    family: str = "gaussian_mult"
    strength: float = 1e-3
    scope: str = "all_params"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown noise scope {self.scope!r}; expected one of {SCOPES}")
        if not np.isfinite(self.strength) or self.strength < 0:
            raise ValueError(f"noise strength must be finite and >= 0, got {self.strength}")
        if self.family == "binary_mask" and self.strength > 1:
            raise ValueError(f"mask probability must be <= 1, got {self.strength}")

    def with_seed(self, seed: int) -> "NoiseSpec":
        return replace(self, seed=seed)


def perturb_flat(
    theta: np.ndarray,
    spec: NoiseSpec,
    rng: Optional[Rng] = None,
    weight_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Perturbed copy of a flat parameter vector.

    A full-length draw is always taken so that noise positions do not depend
    on ``scope``; ``weight_mask`` then restricts where it lands.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if spec.strength == 0:
        return theta.copy()
    if rng is None:
        rng = Rng(spec.seed)
    d = theta.size
    if spec.family == "binary_mask":
        noisy = theta * rng.bernoulli_mask(d, spec.strength)
    elif spec.family == "gaussian_mult":
        noisy = theta * (1.0 + spec.strength * rng.normal(d))
    else:
        noisy = theta + spec.strength * rng.normal(d)
    if spec.scope == "weights_only":
        if weight_mask is None:
            raise ValueError("weights_only scope needs a weight mask")
        noisy = np.where(weight_mask, noisy, theta)
    return noisy


def perturb(params: MlpParams, spec: NoiseSpec, rng: Optional[Rng] = None) -> MlpParams:
    """Return ``theta + delta`` as new params; the input is never modified."""
    mask = params.weight_mask() if spec.scope == "weights_only" else None
    return unflatten(params.config, perturb_flat(flatten(params), spec, rng, mask))


def mse_objective(params: MlpParams, dataset) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Flat-vector view of the reconstruction loss: ``theta -> (loss, grad)``."""
    cfg = params.config

    def objective(theta):
        p = unflatten(cfg, theta)
        _, cache = forward(p, dataset.coords)
        grad, loss = backward_mse(p, cache, dataset.coords, dataset.targets)
        return loss, flatten(grad)

    return objective


def taylor_gap_trials(
    params: MlpParams,
    spec: NoiseSpec,
    dataset=None,
    trials: int = 100,
    objective: Optional[Callable[[np.ndarray], tuple[float, np.ndarray]]] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrays ``(delta_loss, bound, delta_norm)`` over ``trials`` draws.

    Trial ``t`` uses seed ``spec.seed + t``. ``objective`` overrides the
    reconstruction loss (used for closed-form test functions).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if objective is None:
        objective = mse_objective(params, dataset)
    theta = flatten(params)
    mask = params.weight_mask() if spec.scope == "weights_only" else None
    base_loss, grad = objective(theta)
    gnorm = float(np.linalg.norm(grad))
    delta_loss = np.empty(trials)
    delta_norm = np.empty(trials)
    for t in range(trials):
        noisy = perturb_flat(theta, spec.with_seed(spec.seed + t), weight_mask=mask)
        loss, _ = objective(noisy)
        delta_loss[t] = abs(loss - base_loss)
        delta_norm[t] = np.linalg.norm(noisy - theta)
    return delta_loss, gnorm * delta_norm, delta_norm


def taylor_gap(params, spec, dataset=None, trials=100, objective=None) -> list[tuple[float, float]]:
    """Per trial: ``(|L(theta+delta) - L(theta)|, ||grad L|| * ||delta||)``."""
    dl, bound, _ = taylor_gap_trials(params, spec, dataset, trials, objective)
    return list(zip(dl.tolist(), bound.tolist()))


def fit_remainder_constant(delta_loss, bound, delta_norm) -> float:
    """Smallest ``C >= 0`` with ``delta_loss <= bound + C * ||delta||^2`` on every trial."""
    delta_norm = np.asarray(delta_norm)
    keep = delta_norm > 0
    if not keep.any():
        return 0.0
    excess = (np.asarray(delta_loss)[keep] - np.asarray(bound)[keep]) / delta_norm[keep] ** 2
    return float(max(0.0, excess.max()))
