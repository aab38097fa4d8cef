import numpy as np
import pytest

from robust_inr.core_math import Rng
from robust_inr.data_io import CoordinateDataset, make_coord_grid
from robust_inr.model import SirenConfig, unflatten


def toy_problem(seed, width=6, layers=2, batch=8, in_dim=2, out_dim=1, omega=2.0, scale=0.5):
    """Small random network and dataset for gradient checks."""
    rng = Rng(seed)
    cfg = SirenConfig(in_dim, out_dim, width, layers, omega, omega)
    params = unflatten(cfg, scale * rng.normal(cfg.num_params))
    coords = 2.0 * rng.uniform(batch * in_dim).reshape(batch, in_dim) - 1.0
    targets = 2.0 * rng.uniform(batch * out_dim).reshape(batch, out_dim) - 1.0
    return cfg, params, CoordinateDataset(coords, targets, (batch,), "audio")


def gradient_image(h=16, w=16):
    """Smooth synthetic grayscale image as a dataset."""
    coords = make_coord_grid([h, w])
    targets = (0.6 * coords[:, 0] * coords[:, 1] + 0.3 * np.sin(2.0 * coords[:, 1])).reshape(-1, 1)
    return CoordinateDataset(coords, targets, (h, w), "image_gray")


@pytest.fixture
def toy():
    return toy_problem(0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
