"""Downstream uses of a peel hierarchy: posterized abstraction, multi-scale
retinex enhancement, and cross-modal guidance preparation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, ShapeMismatch
from .guidance import reference_from_gradient, threshold_guidance
from .image import as_image, clamp01, gradient
from .pipeline import PeelHierarchy

__all__ = [
    "AbstractionConfig",
    "RetinexConfig",
    "quantize",
    "abstract",
    "retinex_enhance",
    "retinex_illumination",
    "guidance_from_reference",
]

LOG_GUARD = 1.0 / 255.0  # one quantization step keeps the log finite


@dataclass(frozen=True)
class AbstractionConfig:
    """scale_index of None means the deepest structure layer."""

    scale_index: int | None = None
    quant_levels: int = 8
    edge_overlay: bool = False
    edge_color: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.quant_levels < 2:
            raise InvalidParameter(f"quant_levels must be >= 2, got {self.quant_levels}")
        if len(self.edge_color) != 3 or any(not (0.0 <= v <= 1.0) for v in self.edge_color):
            raise InvalidParameter("edge_color must be three values in [0, 1]")


@dataclass(frozen=True)
class RetinexConfig:
    """scale_indices of None means all scales; weights of None means uniform."""

    scale_indices: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    gain: float = 1.0
    offset: float = 0.0

    def resolved(self, num_scales: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
        indices = self.scale_indices or tuple(range(1, num_scales + 1))
        if any(not (1 <= t <= num_scales) for t in indices):
            raise InvalidParameter(f"scale indices {indices} outside 1..{num_scales}")
        weights = self.weights or tuple(1.0 / len(indices) for _ in indices)
        if len(weights) != len(indices):
            raise InvalidParameter(f"{len(weights)} weights for {len(indices)} scales")
        if any(w < 0.0 for w in weights):
            raise InvalidParameter("weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidParameter(f"weights must sum to 1, got {sum(weights)}")
        return tuple(indices), tuple(weights)


def quantize(img: np.ndarray, levels: int) -> np.ndarray:
    """Uniform quantization to bin centers: bins [k/L, (k+1)/L), value 1
    falls in the last bin."""
    if levels < 2:
        raise InvalidParameter(f"quant_levels must be >= 2, got {levels}")
    img = as_image(img)
    bins = np.minimum(np.floor(img * levels), levels - 1)
    return (bins + 0.5) / levels


def abstract(h: PeelHierarchy, cfg: AbstractionConfig | None = None) -> np.ndarray:
    """Posterize a structure layer, optionally painting its guidance edges.

    Gray hierarchies are promoted to RGB when an overlay is requested so the
    edge color can be honored.
    """
    cfg = cfg or AbstractionConfig()
    t = cfg.scale_index if cfg.scale_index is not None else h.num_scales
    if not (1 <= t <= h.num_scales):
        raise InvalidParameter(f"scale_index {t} outside 1..{h.num_scales}")
    out = quantize(h.structure(t), cfg.quant_levels)
    if cfg.edge_overlay:
        if out.shape[2] == 1:
            out = np.repeat(out, 3, axis=2)
        edges = h.guidance(t) > 0.5
        out = out.copy()
        out[edges, :] = np.asarray(cfg.edge_color, dtype=np.float64)
    return out


def _log_illumination(h: PeelHierarchy, indices, weights) -> np.ndarray:
    acc = np.zeros_like(h.input)
    for t, w in zip(indices, weights):
        acc += w * np.log(h.structure(t) + LOG_GUARD)
    return acc


def retinex_enhance(input_img: np.ndarray, h: PeelHierarchy, cfg: RetinexConfig | None = None) -> np.ndarray:
    """Multi-scale retinex with the hierarchy's structure layers as
    illumination estimates:

        R = sum_k w_k * (log(input + d) - log(I^{t_k} + d)),  d = 1/255

    remapped by gain/offset and clamped to [0, 1].
    """
    cfg = cfg or RetinexConfig()
    input_img = as_image(input_img)
    if input_img.shape != h.input.shape:
        raise ShapeMismatch(f"input shape {input_img.shape} vs hierarchy {h.input.shape}")
    indices, weights = cfg.resolved(h.num_scales)
    reflectance = np.log(input_img + LOG_GUARD) - _log_illumination(h, indices, weights)
    return clamp01(cfg.gain * reflectance + cfg.offset)


def retinex_illumination(h: PeelHierarchy, cfg: RetinexConfig | None = None) -> np.ndarray:
    """The illumination estimate itself: the weighted geometric mean of the
    selected structure layers."""
    cfg = cfg or RetinexConfig()
    indices, weights = cfg.resolved(h.num_scales)
    return clamp01(np.exp(_log_illumination(h, indices, weights)) - LOG_GUARD)


def guidance_from_reference(reference: np.ndarray, beta_g: float) -> np.ndarray:
    """Edge guide from a reference image of any modality (a depth map, or
    another photograph): its thresholded gradient magnitude.

    Feeding an image as its own reference reproduces the pipeline's
    self-guidance exactly.
    """
    return threshold_guidance(reference_from_gradient(gradient(reference)), beta_g)
