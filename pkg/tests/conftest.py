import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile(
    "ci", max_examples=30, deadline=None, derandomize=True
)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

REPO = Path(__file__).resolve().parents[1]
CORPUS = REPO / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def natural_paths() -> list[Path]:
    return sorted((CORPUS / "natural").glob("img*.png"))


@pytest.fixture(scope="session")
def dark_paths() -> list[Path]:
    return sorted((CORPUS / "dark").glob("dark*.png"))


def textured_image(size_y: int, size_x: int, seed: int, channels: int = 3) -> np.ndarray:
    """Seeded smooth-shading + block + mild-noise image; converges under
    default solver budgets, unlike raw white noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size_y, 0:size_x].astype(float)
    img = np.zeros((size_y, size_x, channels))
    for c in range(channels):
        img[:, :, c] = 0.45 + 0.2 * np.sin(
            2 * np.pi * (xx / size_x * rng.uniform(0.5, 2.0) + rng.random())
        ) * np.cos(2 * np.pi * (yy / size_y * rng.uniform(0.5, 2.0) + rng.random()))
    y0, x0 = int(rng.integers(0, max(size_y // 2, 1))), int(rng.integers(0, max(size_x // 2, 1)))
    img[y0 : y0 + size_y // 2, x0 : x0 + size_x // 2, :] += rng.uniform(-0.3, 0.3, channels)
    img += 0.08 * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)
