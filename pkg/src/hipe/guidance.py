"""Edge guidance: the threshold map, the reference-gradient recurrence,
and multi-scale edge confidence.

A guidance map is a float64 (H, W) array in [0, 1]. Maps produced by
`threshold_guidance` are exactly binary: a pixel is an edge iff its
reference-gradient magnitude exceeds 1/(1 + beta_g), which is the pointwise
minimizer of the binary guidance objective (see `guidance_objective`).

The reference gradient is a synthetic target field. It starts as the input
gradient (optionally boosted on annotated pixels) and shrinks everywhere
except on the annotation as the scale index grows, so edge sets are nested
across scales by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySequence, InvalidParameter, ShapeMismatch
from .image import GradientField, load_image

__all__ = [
    "ScaleSchedule",
    "ReferenceGradient",
    "threshold_guidance",
    "guidance_objective",
    "init_reference",
    "step_reference",
    "reference_from_gradient",
    "modulate_reference",
    "self_guidance",
    "edge_confidence",
    "nms_thin",
    "load_guidance",
]


@dataclass(frozen=True)
class ScaleSchedule:
    """Geometric peeling-strength schedule: alpha_t = alpha1 * eta**(t-1),
    clamped to 1, for t = 1..num_scales."""

    alpha1: float = 0.3
    eta: float = 1.5
    num_scales: int = 4

    def __post_init__(self):
        if not (0.0 < self.alpha1 <= 1.0):
            raise InvalidParameter(f"alpha1 must be in (0, 1], got {self.alpha1}")
        if self.eta < 0.0:
            raise InvalidParameter(f"eta must be >= 0, got {self.eta}")
        if int(self.num_scales) != self.num_scales or self.num_scales < 1:
            raise InvalidParameter(f"num_scales must be a positive integer, got {self.num_scales}")

    def alphas(self) -> tuple[float, ...]:
        return tuple(min(self.alpha1 * self.eta ** (t - 1), 1.0) for t in range(1, self.num_scales + 1))


@dataclass(frozen=True)
class ReferenceGradient:
    """Synthetic target gradient field at one scale.

    dx, dy are per-pixel-per-channel signed components; magnitude is the
    per-pixel channel-reduced magnitude in [0, 1]. Directional components
    are kept proportional to the source gradient so edge orientation
    survives the magnitude recurrence.
    """

    dx: np.ndarray
    dy: np.ndarray
    magnitude: np.ndarray


def _check_map(values: np.ndarray, like: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != like.shape:
        raise ShapeMismatch(f"{name} shape {values.shape} does not match {like.shape}")
    return values


def threshold_guidance(ref: ReferenceGradient, beta_g: float) -> np.ndarray:
    """Binary guidance map: 1 where magnitude > 1/(1 + beta_g), else 0.

    Ties resolve to 0. This is the exact minimizer of `guidance_objective`
    over all binary maps, evaluated pixel by pixel.
    """
    if beta_g <= 0.0:
        raise InvalidParameter(f"beta_g must be > 0, got {beta_g}")
    threshold = 1.0 / (1.0 + beta_g)
    return (ref.magnitude > threshold).astype(np.float64)


def guidance_objective(gmap: np.ndarray, magnitudes: np.ndarray, beta_g: float) -> float:
    """Edge/non-edge balance cost of a guidance map against a magnitude
    field in [0, 1]: sum of G*(1-m) + beta_g*(1-G)*m. Lower is better."""
    gmap = _check_map(gmap, magnitudes, "guidance map")
    return float(np.sum(gmap * (1.0 - magnitudes) + beta_g * (1.0 - gmap) * magnitudes))


def _rescaled(dx: np.ndarray, dy: np.ndarray, old_mag: np.ndarray, new_mag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # proportional rescale; zero where the source magnitude is zero.
    # Dividing the components first keeps every intermediate bounded by 1
    # (|dx| <= old_mag), so tiny denormal magnitudes cannot overflow.
    positive = old_mag > 0.0
    safe = np.where(positive, old_mag, 1.0)[:, :, None]
    keep = positive[:, :, None]
    new3 = new_mag[:, :, None]
    return (
        np.where(keep, dx / safe * new3, 0.0),
        np.where(keep, dy / safe * new3, 0.0),
    )


def init_reference(input_grad: GradientField, alpha1: float, ggr: np.ndarray) -> ReferenceGradient:
    """First-scale reference: magnitude (1 - alpha1)*|grad| + ggr, clamped
    to [0, 1]; directional components rescaled to the new magnitude."""
    ggr = _check_map(ggr, input_grad.magnitude, "annotation map")
    magnitude = np.clip((1.0 - alpha1) * input_grad.magnitude + ggr, 0.0, 1.0)
    dx, dy = _rescaled(input_grad.dx, input_grad.dy, input_grad.magnitude, magnitude)
    return ReferenceGradient(dx=dx, dy=dy, magnitude=magnitude)


def step_reference(ref: ReferenceGradient, alpha_t: float, ggr: np.ndarray) -> ReferenceGradient:
    """Advance the recurrence one scale: shrink the magnitude by
    1 - alpha_t*(1 - ggr) per pixel.

    Pixels with ggr = 1 are fixed points; alpha_t = 0 is the identity,
    bitwise. The factor never exceeds 1, so magnitudes are pointwise
    non-increasing across scales.
    """
    if not (0.0 <= alpha_t <= 1.0):
        raise InvalidParameter(f"alpha_t must be in [0, 1], got {alpha_t}")
    ggr = _check_map(ggr, ref.magnitude, "annotation map")
    factor = 1.0 - alpha_t * (1.0 - ggr)
    return ReferenceGradient(
        dx=ref.dx * factor[:, :, None],
        dy=ref.dy * factor[:, :, None],
        magnitude=ref.magnitude * factor,
    )


def reference_from_gradient(grad: GradientField) -> ReferenceGradient:
    """Identity reference: the gradient itself, magnitude clamped to 1."""
    magnitude = np.clip(grad.magnitude, 0.0, 1.0)
    dx, dy = _rescaled(grad.dx, grad.dy, grad.magnitude, magnitude)
    return ReferenceGradient(dx=dx, dy=dy, magnitude=magnitude)


def modulate_reference(grad: GradientField, guide: np.ndarray) -> ReferenceGradient:
    """Reference for externally guided peeling: the input gradient scaled
    per pixel by a guide in [0, 1] (1 keeps the edge, 0 releases it)."""
    guide = _check_map(guide, grad.magnitude, "guide")
    if np.min(guide) < 0.0 or np.max(guide) > 1.0:
        raise InvalidParameter("guide values must lie in [0, 1]")
    base = reference_from_gradient(grad)
    return ReferenceGradient(
        dx=base.dx * guide[:, :, None],
        dy=base.dy * guide[:, :, None],
        magnitude=base.magnitude * guide,
    )


def self_guidance(input_grad: GradientField, beta_g: float) -> np.ndarray:
    """Annotation-free fallback for the user annotation: threshold the
    input's own (clamped) gradient magnitude."""
    return threshold_guidance(reference_from_gradient(input_grad), beta_g)


# NMS direction bins: gradient angle folded to [0, 180) and quantized to
# 0/45/90/135 degrees; the two compared neighbors lie along the quantized
# gradient direction (row offset, column offset).
_NMS_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))


def _shifted(a: np.ndarray, di: int, dj: int) -> np.ndarray:
    # neighbor magnitude with zero fill outside the frame
    out = np.zeros_like(a)
    h, w = a.shape
    src_i = slice(max(di, 0), h + min(di, 0))
    src_j = slice(max(dj, 0), w + min(dj, 0))
    dst_i = slice(max(-di, 0), h + min(-di, 0))
    dst_j = slice(max(-dj, 0), w + min(-dj, 0))
    out[dst_i, dst_j] = a[src_i, src_j]
    return out


def nms_thin(gmap: np.ndarray, grad: GradientField | ReferenceGradient) -> np.ndarray:
    """Thin a guidance map along its gradient field.

    A pixel survives iff its gradient magnitude is strictly greater than
    both neighbors along the quantized gradient direction; the map value is
    kept at survivors and zeroed elsewhere. Direction is taken from the
    channel attaining the per-pixel magnitude maximum.
    """
    gmap = _check_map(gmap, grad.magnitude, "guidance map")
    mag = grad.magnitude
    energy = grad.dx * grad.dx + grad.dy * grad.dy
    pick = np.argmax(energy, axis=2)
    rows, cols = np.indices(pick.shape)
    dx = grad.dx[rows, cols, pick]
    dy = grad.dy[rows, cols, pick]
    angle = np.degrees(np.arctan2(dy, dx)) % 180.0
    bins = np.floor((angle + 22.5) / 45.0).astype(int) % 4
    survives = np.zeros(gmap.shape, dtype=bool)
    for b, (di, dj) in enumerate(_NMS_OFFSETS):
        fwd = _shifted(mag, di, dj)
        bwd = _shifted(mag, -di, -dj)
        survives |= (bins == b) & (mag > fwd) & (mag > bwd)
    return np.where(survives, gmap, 0.0)


def edge_confidence(
    maps: list[np.ndarray] | tuple[np.ndarray, ...],
    grads: list[GradientField | ReferenceGradient] | tuple,
) -> np.ndarray:
    """Average of per-scale guidance maps, each thinned by NMS against its
    own scale's gradient field."""
    if len(maps) == 0:
        raise EmptySequence("edge_confidence needs at least one map")
    if len(maps) != len(grads):
        raise ShapeMismatch(f"{len(maps)} maps vs {len(grads)} gradient fields")
    acc = np.zeros_like(np.asarray(maps[0], dtype=np.float64))
    for gmap, grad in zip(maps, grads):
        acc += nms_thin(gmap, grad)
    return acc / len(maps)


def load_guidance(path, binary: bool = False) -> np.ndarray:
    """Load a guidance/annotation map from a grayscale image file.

    Color files are reduced by channel maximum. With binary=True any value
    above 0.5 counts as an edge; otherwise soft values pass through as-is.
    """
    img = load_image(path)
    values = img.max(axis=2)
    if binary:
        return (values > 0.5).astype(np.float64)
    return values


def _as_guidance(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.ndim != 2:
        raise ShapeMismatch(f"guidance map must be 2-D, got shape {values.shape}")
    if np.min(values) < 0.0 or np.max(values) > 1.0:
        raise InvalidParameter("guidance values must lie in [0, 1]")
    return values
