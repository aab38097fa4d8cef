"""Coordinate-network signal fitting with a gradient-norm penalty for weight-noise robustness."""
from .core_math import Rng, finite_difference_gradient, matmul
from .data_io import CoordinateDataset, load_signal, load_weights, save_weights
from .loss import LossEval, LossSpec, evaluate
from .model import MlpParams, SirenConfig, backward_mse, flatten, forward, init_siren, unflatten
from .perturb import NoiseSpec, perturb, taylor_gap
from .train_eval import (
    SweepJob,
    SweepRecord,
    TrainConfig,
    noisy_psnr_stats,
    psnr,
    reconstruction_psnr,
    sweep,
    train,
)

__version__ = "0.1.0"
