"""Flat ``key = value`` run configuration.

Keys carry a dotted section prefix (``train.epochs = 2000``). Blank lines and
``#`` comments are ignored; list values are comma-separated. Every key has a
default in :data:`DEFAULTS`; anything else is rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .loss import LossSpec
from .model import SirenConfig
from .perturb import NoiseSpec
from .train_eval import SweepJob, TrainConfig


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (default text, parser)
DEFAULTS: dict[str, tuple[str, Any]] = {
    "seed": ("0", int),
    "model.hidden_width": ("256", int),
    "model.hidden_layers": ("3", int),
    "model.omega_first": ("30", float),
    "model.omega_hidden": ("30", float),
    "train.epochs": ("2000", int),
    "train.learning_rate": ("1e-4", float),
    "train.beta1": ("0.9", float),
    "train.beta2": ("0.999", float),
    "train.eps": ("1e-8", float),
    "train.log_every": ("100", int),
    "train.batch_size": ("0", int),
    "loss.family": ("mse", str),
    "loss.lambda": ("0.1", float),
    "loss.power_iters": ("20", int),
    "loss.exact_penalty_grad": ("false", _bool),
    "noise.family": ("gaussian_mult", str),
    "noise.strength": ("1e-3", float),
    "noise.scope": ("all_params", str),
    "noise.trials": ("20", int),
    "io.input": ("", str),
    "io.modality": ("auto", str),
    "io.audio_downsample": ("1", int),
    "io.out_dir": ("out", str),
    "io.weights": ("", str),
    "io.weights_dtype": ("f64", str),
    "io.figures": ("true", _bool),
    "sweep.losses": ("mse, robust", _words),
    "sweep.lambdas": ("0.01, 0.1, 0.2, 0.5", _floats),
    "sweep.noise_families": ("gaussian_mult, binary_mask", _words),
    "sweep.strengths": ("1e-4, 1e-3, 1e-2", _floats),
    "sweep.trials": ("20", int),
    "sweep.workers": ("1", int),
}


@dataclass
class RunConfig:
    values: dict[str, Any]
    raw: dict[str, str] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def path(self, key: str) -> Path | None:
        text = self.values[key]
        if not text:
            return None
        p = Path(text)
        return p if p.is_absolute() else self.base_dir / p

    def model_config(self, in_dim: int, out_dim: int) -> SirenConfig:
        v = self.values
        return SirenConfig(in_dim, out_dim, v["model.hidden_width"], v["model.hidden_layers"],
                           v["model.omega_first"], v["model.omega_hidden"])

    def noise_spec(self) -> NoiseSpec:
        v = self.values
        return NoiseSpec(v["noise.family"], v["noise.strength"], v["noise.scope"], v["seed"])

    def loss_spec(self) -> LossSpec:
        v = self.values
        noise = self.noise_spec() if v["loss.family"] == "noise_aware" else None
        return LossSpec(v["loss.family"], v["loss.lambda"], v["loss.power_iters"], v["seed"],
                        noise, v["loss.exact_penalty_grad"])

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(v["train.epochs"], v["train.learning_rate"], v["train.beta1"],
                           v["train.beta2"], v["train.eps"], v["seed"], self.loss_spec(),
                           v["train.log_every"], v["train.batch_size"])

    def sweep_job(self, in_dim: int, out_dim: int) -> SweepJob:
        v = self.values
        noise = self.noise_spec() if "noise_aware" in v["sweep.losses"] else None
        return SweepJob(self.model_config(in_dim, out_dim), self.train_config(),
                        v["sweep.losses"], v["sweep.lambdas"], v["sweep.noise_families"],
                        v["sweep.strengths"], v["sweep.trials"], v["seed"], v["noise.scope"],
                        noise)

    def resolved_text(self) -> str:
        lines = ["# fully resolved configuration"]
        for key in DEFAULTS:
            lines.append(f"{key} = {self.raw.get(key, DEFAULTS[key][0])}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, path) -> None:
        Path(path).write_text(self.resolved_text())


def parse_config(text: str, base_dir=".", overrides: dict[str, str] | None = None) -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    raw.update(overrides or {})
    values = {}
    for key, (default, parser) in DEFAULTS.items():
        text_value = raw.get(key, default)
        try:
            values[key] = parser(text_value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {text_value!r} ({exc})") from None
    return RunConfig(values, raw, Path(base_dir))


def load_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent, overrides)
