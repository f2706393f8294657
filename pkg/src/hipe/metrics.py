"""Gradient-correlation metrics for evaluating a disassembly.

GCC is the mean absolute elementwise product of two images' directional
gradients: low values mean the detail and structure layers share no
gradient support. It is computed over both directions, all channels, and
all pixels, with the same forward-difference convention as everything else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .image import as_image, gradient
from .pipeline import PeelHierarchy

__all__ = ["GccReport", "gcc", "hierarchy_report", "total_variation"]


def gcc(detail: np.ndarray, structure: np.ndarray) -> float:
    """mean over pixels, directions, and channels of |dP * dI|."""
    a = as_image(detail)
    b = as_image(structure)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    ga = gradient(a)
    gb = gradient(b)
    total = float(np.abs(ga.dx * gb.dx).sum() + np.abs(ga.dy * gb.dy).sum())
    return total / (2 * a.size)


def total_variation(img: np.ndarray) -> float:
    """Sum of per-pixel channel-max gradient magnitudes."""
    return float(gradient(img).magnitude.sum())


@dataclass(frozen=True)
class GccReport:
    per_scale: tuple[tuple[int, float], ...]
    mean_gcc: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_scale": [{"t": t, "gcc": value} for t, value in self.per_scale],
                "mean_gcc": self.mean_gcc,
            }
        )


def hierarchy_report(h: PeelHierarchy) -> GccReport:
    """gcc(P^t, I^t) per scale plus the mean, with P^t = input - I^t."""
    rows = []
    for t in range(1, h.num_scales + 1):
        rows.append((t, gcc(h.peeled(t), h.structure(t))))
    mean = sum(value for _, value in rows) / len(rows)
    return GccReport(per_scale=tuple(rows), mean_gcc=mean)
