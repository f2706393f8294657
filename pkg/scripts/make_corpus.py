#!/usr/bin/env python3
"""Regenerate the bundled test corpus.

Writes 10 procedural "natural" 128x128 RGB images (smooth shading, colored
regions, band-limited texture), 5 dark 64x64 images for the enhancement
tests, and one 64x64 texture used by the frozen-golden metric test. All
seeds are fixed; rerunning reproduces the corpus byte for byte.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hipe.image import save_image  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"


def band_noise(rng: np.random.Generator, size: int, lo: float = 0.12, hi: float = 0.45) -> np.ndarray:
    """Zero-mean texture with energy confined to a frequency band."""
    noise = rng.standard_normal((size, size, 3))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    band = ((np.abs(fy) > lo) & (np.abs(fy) < hi)) | ((np.abs(fx) > lo) & (np.abs(fx) < hi))
    out = np.empty_like(noise)
    for c in range(3):
        out[:, :, c] = np.real(np.fft.ifft2(np.fft.fft2(noise[:, :, c]) * band))
    peak = max(np.abs(out).max(), 1e-9)
    return out / peak


def natural_image(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    img = np.zeros((size, size, 3))
    for c in range(3):
        img[:, :, c] = 0.45 + 0.22 * np.sin(
            2 * np.pi * (xx * rng.uniform(0.5, 2.0) / size + rng.random())
        ) * np.cos(2 * np.pi * (yy * rng.uniform(0.5, 2.0) / size + rng.random()))
    for _ in range(5):
        x0 = int(rng.integers(0, size * 3 // 4))
        y0 = int(rng.integers(0, size * 3 // 4))
        w = int(rng.integers(size // 8, size // 2))
        h = int(rng.integers(size // 8, size // 2))
        img[y0 : y0 + h, x0 : x0 + w, :] += rng.uniform(-0.45, 0.45, 3)
    cy, cx = rng.integers(size // 4, size * 3 // 4, 2)
    radius = int(rng.integers(size // 8, size // 3))
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    img[mask, :] += rng.uniform(0.3, 0.5) * np.array([1.0, -1.0, 0.5]) * rng.choice([-1.0, 1.0])
    img += 0.10 * band_noise(rng, size)
    return np.clip(img, 0.0, 1.0)


def dark_image(size: int, seed: int) -> np.ndarray:
    return np.clip(natural_image(size, seed) * 0.22, 0.0, 1.0)


def texture_image(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    img = np.zeros((size, size, 3))
    img[:, :, :] = 0.5
    img[size // 4 : 3 * size // 4, size // 4 : 3 * size // 4, :] += np.array([0.25, -0.1, 0.15])
    img += 0.05 * np.sin(2 * np.pi * 3 * xx / size)[:, :, None]
    img += 0.12 * band_noise(rng, size)
    return np.clip(img, 0.0, 1.0)


def main() -> None:
    (CORPUS / "natural").mkdir(parents=True, exist_ok=True)
    (CORPUS / "dark").mkdir(parents=True, exist_ok=True)
    for k in range(10):
        save_image(natural_image(128, 1000 + k), CORPUS / "natural" / f"img{k:02d}.png")
    for k in range(5):
        save_image(dark_image(64, 2000 + k), CORPUS / "dark" / f"dark{k:02d}.png")
    save_image(texture_image(64, 3000), CORPUS / "texture64.png")
    print(f"corpus written under {CORPUS}")


if __name__ == "__main__":
    main()
