"""SIREN coordinate network: parameters, initialization, forward and analytic backward.

Layer rule for a batch ``x`` (rows are samples):

    h_0 = sin(omega_first  * (x @ W_0.T + b_0))
    h_l = sin(omega_hidden * (h_{l-1} @ W_l.T + b_l))      interior layers
    out = h_L @ W_out.T + b_out                              linear head
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_math import Rng, ShapeError


@dataclass(frozen=True)
class SirenConfig:
    in_dim: int = 2
    out_dim: int = 1
    hidden_width: int = 256
    hidden_layers: int = 3
    omega_first: float = 30.0
    omega_hidden: float = 30.0

    def __post_init__(self):
        for name in ("in_dim", "out_dim", "hidden_width", "hidden_layers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.omega_first <= 0 or self.omega_hidden <= 0:
            raise ValueError("omega values must be positive")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(rows, cols) of each weight matrix, input layer first."""
        w = self.hidden_width
        shapes = [(w, self.in_dim)]
        shapes += [(w, w)] * (self.hidden_layers - 1)
        shapes.append((self.out_dim, w))
        return shapes

    @property
    def num_params(self) -> int:
        return sum(r * c + r for r, c in self.layer_shapes)


@dataclass
class MlpParams:
    """Ordered ``(weight, bias)`` pairs. Gradients use the same container."""

    config: SirenConfig
    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        shapes = self.config.layer_shapes
        if len(self.layers) != len(shapes):
            raise ShapeError(f"expected {len(shapes)} layers, got {len(self.layers)}")
        for i, ((w, b), shape) in enumerate(zip(self.layers, shapes)):
            if w.shape != shape or b.shape != (shape[0],):
                raise ShapeError(
                    f"layer {i}: expected weight {shape} and bias ({shape[0]},), "
                    f"got {w.shape} and {b.shape}"
                )

    @property
    def num_params(self) -> int:
        return self.config.num_params

    def copy(self) -> "MlpParams":
        return MlpParams(self.config, [(w.copy(), b.copy()) for w, b in self.layers])

    def weight_mask(self) -> np.ndarray:
        """Boolean flat mask, True at weight entries and False at bias entries."""
        parts = []
        for w, b in self.layers:
            parts.append(np.ones(w.size, dtype=bool))
            parts.append(np.zeros(b.size, dtype=bool))
        return np.concatenate(parts)


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations retained for backprop.

    ``inputs[l]`` is what layer ``l`` consumed; ``pre[l]`` is its affine output
    before the sine (or the network output for the final layer).
    """

    inputs: list[np.ndarray]
    pre: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.pre)


def init_siren(config: SirenConfig, seed: int = 0) -> MlpParams:
    rng = Rng(seed)
    layers = []
    for i, (rows, cols) in enumerate(config.layer_shapes):
        bound = 1.0 / cols if i == 0 else np.sqrt(6.0 / cols) / config.omega_hidden
        w = (2.0 * rng.uniform(rows * cols) - 1.0).reshape(rows, cols) * bound
        layers.append((w, np.zeros(rows)))
    return MlpParams(config, layers)


def _omega(config: SirenConfig, layer: int) -> float:
    return config.omega_first if layer == 0 else config.omega_hidden


def forward(params: MlpParams, coords: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    coords = np.asarray(coords, dtype=np.float64)
    cfg = params.config
    if coords.ndim != 2 or coords.shape[1] != cfg.in_dim:
        raise ShapeError(f"coords must be (batch, {cfg.in_dim}), got {coords.shape}")
    inputs, pre = [], []
    h = coords
    last = len(params.layers) - 1
    for l, (w, b) in enumerate(params.layers):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if l == last else np.sin(_omega(cfg, l) * z)
    return h, ForwardCache(inputs, pre)


def predict(params: MlpParams, coords: np.ndarray) -> np.ndarray:
    return forward(params, coords)[0]


def backward_mse(
    params: MlpParams, cache: ForwardCache, coords: np.ndarray, targets: np.ndarray
) -> tuple[MlpParams, float]:
    """Gradient of ``mean_i ||f(x_i) - y_i||^2`` and the loss value itself."""
    cfg = params.config
    n_layers = len(params.layers)
    if cache.depth != n_layers or cache.depth != cfg.hidden_layers + 1:
        raise ShapeError(f"cache depth {cache.depth} does not match {n_layers} layers")
    coords = np.asarray(coords, dtype=np.float64)
    if cache.inputs[0].shape != coords.shape:
        raise ShapeError(
            f"cache was built for inputs {cache.inputs[0].shape}, got {coords.shape}"
        )
    out = cache.pre[-1]
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != out.shape:
        raise ShapeError(f"targets {targets.shape} do not match outputs {out.shape}")

    n = out.shape[0]
    resid = out - targets
    loss = float(np.sum(resid * resid) / n)
    delta = (2.0 / n) * resid  # dL/d(pre) at the output layer

    grads: list = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        w, _ = params.layers[l]
        grads[l] = (delta.T @ cache.inputs[l], delta.sum(axis=0))
        if l == 0:
            break
        om = _omega(cfg, l - 1)
        delta = (delta @ w) * (om * np.cos(om * cache.pre[l - 1]))
    return MlpParams(cfg, grads), loss


def flatten(params: MlpParams) -> np.ndarray:
    """Layer-major, weight (row-major) before bias."""
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in params.layers])


def unflatten(config: SirenConfig, v: np.ndarray) -> MlpParams:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != config.num_params:
        raise ShapeError(f"expected a vector of length {config.num_params}, got {v.shape}")
    layers = []
    k = 0
    for rows, cols in config.layer_shapes:
        w = v[k:k + rows * cols].reshape(rows, cols).copy()
        k += rows * cols
        b = v[k:k + rows].copy()
        k += rows
        layers.append((w, b))
    return MlpParams(config, layers)
