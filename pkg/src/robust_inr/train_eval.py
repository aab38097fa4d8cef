"""Adam training loop, PSNR metrics, Monte-Carlo noisy PSNR and the sweep harness."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import loss as losses
from .core_math import Rng
from .loss import LossSpec
from .model import MlpParams, SirenConfig, flatten, init_siren, predict, unflatten
from .perturb import NoiseSpec, perturb

log = logging.getLogger(__name__)

# Seed offsets from a master seed. Trial t of a noise evaluation uses
# NOISE_SEED_OFFSET + t; every noise point shares the same trial seeds.
INIT_SEED_OFFSET = 0
TRAIN_SEED_OFFSET = 1
NOISE_SEED_OFFSET = 1000

ROW_COLUMNS = ("loss_family", "lambda", "noise_family", "strength", "trial", "psnr_db")
SUMMARY_COLUMNS = (
    "loss_family", "lambda", "noise_family", "strength", "trials",
    "mean_psnr_db", "std_psnr_db", "clean_psnr_db", "status",
)


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    log_every: int = 100
    batch_size: int = 0  # 0 means full batch

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie strictly between 0 and 1")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0")


@dataclass
class TrainRecord:
    step: int
    data_term: float
    penalty_term: float
    total: float


@dataclass
class TrainReport:
    records: list[TrainRecord]
    clean_psnr: float
    wall_time: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "data_term", "penalty_term", "total"])
            for r in self.records:
                w.writerow([r.step, _fmt(r.data_term), _fmt(r.penalty_term), _fmt(r.total)])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, d: int) -> "AdamState":
        return cls(np.zeros(d), np.zeros(d), 0)


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray, config: TrainConfig):
    """One bias-corrected Adam update. Returns ``(new_theta, new_state)``."""
    if not (theta.shape == grad.shape == state.m.shape):
        raise ValueError(
            f"Adam dims disagree: params {theta.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new, AdamState(m, v, t)


class _Batch:
    """Row subset of a dataset exposing ``coords``/``targets``."""

    def __init__(self, coords, targets):
        self.coords = coords
        self.targets = targets


def train(
    dataset,
    model_config: SirenConfig,
    train_config: TrainConfig,
    init_seed: Optional[int] = None,
) -> tuple[MlpParams, TrainReport]:
    """Fit a SIREN to ``dataset``. Deterministic given the seeds.

    ``init_seed`` defaults to ``train_config.seed``; the noise-aware and
    minibatch streams use ``train_config.seed + TRAIN_SEED_OFFSET``.
    """
    if dataset.coords.shape[1] != model_config.in_dim or dataset.targets.shape[1] != model_config.out_dim:
        raise ValueError(
            f"dataset maps {dataset.coords.shape[1]} -> {dataset.targets.shape[1]} dims, "
            f"model expects {model_config.in_dim} -> {model_config.out_dim}"
        )
    start = time.perf_counter()
    seed = train_config.seed if init_seed is None else init_seed
    params = init_siren(model_config, seed)
    theta = flatten(params)
    state = AdamState.zeros(theta.size)
    rng = Rng(train_config.seed + TRAIN_SEED_OFFSET)
    spec = train_config.loss
    n = len(dataset.coords)
    bs = train_config.batch_size if 0 < train_config.batch_size < n else 0
    order = None
    cursor = 0
    records = []

    for step in range(1, train_config.epochs + 1):
        batch = dataset
        if bs:
            if order is None or cursor + bs > n:
                order = rng.permutation(n)
                cursor = 0
            idx = order[cursor:cursor + bs]
            cursor += bs
            batch = _Batch(dataset.coords[idx], dataset.targets[idx])
        ev = losses.evaluate(spec, params, batch, rng)
        if not math.isfinite(ev.total):
            raise NumericalError(f"non-finite loss at step {step}")
        if step % train_config.log_every == 0 or step == 1 or step == train_config.epochs:
            records.append(TrainRecord(step, ev.data_term, ev.penalty_term, ev.total))
            log.debug("step %d total %.6e", step, ev.total)
        theta, state = adam_step(state, theta, ev.grad, train_config)
        params = unflatten(model_config, theta)

    clean = reconstruction_psnr(predict(params, dataset.coords), dataset.targets)
    return params, TrainReport(records, clean, time.perf_counter() - start)


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; ``inf`` when the inputs are identical."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def reconstruction_psnr(outputs: np.ndarray, targets: np.ndarray) -> float:
    """PSNR of network outputs against ``[-1, 1]`` targets.

    Outputs are clamped to the target range (as when saved), then both sides
    are remapped to ``[0, 1]`` and compared with peak 1.
    """
    pred = (np.clip(outputs, -1.0, 1.0) + 1.0) / 2.0
    return psnr(pred, (np.asarray(targets) + 1.0) / 2.0, 1.0)


@dataclass
class NoisyPsnr:
    mean: float
    std: float
    per_trial: list[float]


def noisy_psnr_stats(params: MlpParams, dataset, noise: NoiseSpec, trials: int = 20) -> NoisyPsnr:
    """PSNR over ``trials`` perturbations; trial ``t`` uses seed ``noise.seed + t``."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    vals = []
    for t in range(trials):
        noisy = perturb(params, noise.with_seed(noise.seed + t))
        vals.append(reconstruction_psnr(predict(noisy, dataset.coords), dataset.targets))
    arr = np.array(vals)
    if np.all(arr == arr[0]):
        return NoisyPsnr(float(arr[0]), 0.0, vals)
    return NoisyPsnr(float(arr.mean()), float(arr.std()), vals)


# -- sweep -----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRecord:
    loss_family: str
    lam: float
    noise_family: str
    strength: float
    trial: int
    psnr_db: float

    def row(self) -> list[str]:
        return [self.loss_family, _fmt(self.lam), self.noise_family, _fmt(self.strength),
                str(self.trial), _fmt(self.psnr_db)]


@dataclass(frozen=True)
class SweepJob:
    """Cross product of loss cells and noise points.

    ``loss_families`` x ``lambdas`` gives the trained cells (``mse`` collapses
    to a single cell with lambda 0); ``noise_families`` x ``strengths`` the
    evaluation points.
    """

    model: SirenConfig
    train: TrainConfig
    loss_families: tuple[str, ...] = ("mse", "robust")
    lambdas: tuple[float, ...] = (0.01, 0.1, 0.2, 0.5)
    noise_families: tuple[str, ...] = ("gaussian_mult", "binary_mask")
    strengths: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    trials: int = 20
    master_seed: int = 0
    scope: str = "all_params"
    noise_aware: Optional[NoiseSpec] = None

    def cells(self) -> list[tuple[str, float]]:
        out = []
        for fam in self.loss_families:
            lams = [0.0] if fam in ("mse", "noise_aware") else list(self.lambdas)
            for lam in lams:
                if (fam, lam) not in out:
                    out.append((fam, float(lam)))
        return out

    def loss_spec(self, family: str, lam: float) -> LossSpec:
        base = self.train.loss
        noise = self.noise_aware or base.noise
        if family == "noise_aware" and noise is None:
            noise = NoiseSpec("gaussian_mult", 1e-3)
        return replace(base, family=family, lam=lam, noise=noise)

    def train_config(self, family: str, lam: float) -> TrainConfig:
        return replace(self.train, seed=self.master_seed, loss=self.loss_spec(family, lam))

    def noise_spec(self, family: str, strength: float) -> NoiseSpec:
        return NoiseSpec(family, strength, self.scope, self.master_seed + NOISE_SEED_OFFSET)


@dataclass
class CellResult:
    loss_family: str
    lam: float
    records: list[SweepRecord]
    summary: list[dict]
    clean_psnr: float = math.nan
    params: Optional[MlpParams] = None
    error: Optional[str] = None


@dataclass
class SweepResult:
    records: list[SweepRecord]
    summary: list[dict]
    cells: list[CellResult]

    def params(self, family: str, lam: float = 0.0) -> MlpParams:
        for c in self.cells:
            if c.loss_family == family and c.lam == lam:
                return c.params
        raise KeyError((family, lam))


def run_cell(job: SweepJob, dataset, family: str, lam: float, params: Optional[MlpParams] = None) -> CellResult:
    """Train (unless ``params`` is given) and evaluate one loss cell."""
    try:
        if params is None:
            params, report = train(dataset, job.model, job.train_config(family, lam),
                                   init_seed=job.master_seed + INIT_SEED_OFFSET)
            clean = report.clean_psnr
        else:
            clean = reconstruction_psnr(predict(params, dataset.coords), dataset.targets)
        records, summary = [], []
        points = [(nf, s) for nf in job.noise_families for s in job.strengths]
        if not points:
            records.append(SweepRecord(family, lam, "none", 0.0, 0, clean))
            summary.append(_summary(family, lam, "none", 0.0, 1, clean, 0.0, clean, "ok"))
        for nf, s in points:
            stats = noisy_psnr_stats(params, dataset, job.noise_spec(nf, s), job.trials)
            records += [SweepRecord(family, lam, nf, s, t, v) for t, v in enumerate(stats.per_trial)]
            summary.append(_summary(family, lam, nf, s, job.trials, stats.mean, stats.std, clean, "ok"))
        return CellResult(family, lam, records, summary, clean, params)
    except Exception as exc:  # a failed cell must not stop the sweep
        log.error("sweep cell %s/%g failed: %s", family, lam, exc)
        msg = f"error: {type(exc).__name__}: {exc}"
        rec = SweepRecord(family, lam, "error", math.nan, -1, math.nan)
        summ = _summary(family, lam, "error", math.nan, 0, math.nan, math.nan, math.nan, msg)
        return CellResult(family, lam, [rec], [summ], error=msg)


def _run_cell_packed(args):
    return run_cell(*args)


def sweep(job: SweepJob, dataset, out_dir=None, workers: int = 1, keep_models: bool = False) -> SweepResult:
    """Run every cell of ``job``; optionally write ``sweep_rows.csv`` and ``sweep_summary.csv``."""
    cells = job.cells()
    tasks = [(job, dataset, fam, lam) for fam, lam in cells]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_packed, tasks))
    else:
        results = [run_cell(*t) for t in tasks]
    if not keep_models:
        for r in results:
            r.params = None
    records = sorted((rec for r in results for rec in r.records), key=_record_key)
    summary = sorted((s for r in results for s in r.summary), key=_summary_key)
    result = SweepResult(records, summary, results)
    if out_dir is not None:
        write_sweep_csvs(result, out_dir)
    return result


def write_sweep_csvs(result: SweepResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_path = out / "sweep_rows.csv"
    with open(rows_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for rec in result.records:
            w.writerow(rec.row())
    summary_path = out / "sweep_summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in result.summary:
            w.writerow([s[c] if isinstance(s[c], str) else
                        (str(s[c]) if isinstance(s[c], int) else _fmt(s[c])) for c in SUMMARY_COLUMNS])
    return rows_path, summary_path


def read_sweep_rows(path) -> list[SweepRecord]:
    """Parse a row-level sweep CSV back into records."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ROW_COLUMNS:
            raise ValueError(f"unexpected sweep CSV header {header}")
        return [SweepRecord(r[0], float(r[1]), r[2], float(r[3]), int(r[4]), float(r[5]))
                for r in reader]


def _summary(family, lam, nf, s, trials, mean, std, clean, status) -> dict:
    return {"loss_family": family, "lambda": lam, "noise_family": nf, "strength": s,
            "trials": trials, "mean_psnr_db": mean, "std_psnr_db": std,
            "clean_psnr_db": clean, "status": status}


def _record_key(r: SweepRecord):
    return (r.loss_family, r.lam, r.noise_family, _nan_last(r.strength), r.trial)


def _summary_key(s: dict):
    return (s["loss_family"], s["lambda"], s["noise_family"], _nan_last(s["strength"]))


def _nan_last(x: float) -> float:
    return math.inf if math.isnan(x) else x


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def summarize(records: Sequence[SweepRecord]) -> dict:
    """Mean PSNR per ``(loss_family, lambda, noise_family, strength)``."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.loss_family, r.lam, r.noise_family, r.strength), []).append(r.psnr_db)
    return {k: float(np.mean(v)) for k, v in groups.items()}
