"""hipe: hierarchical image peeling.

Disassembles an image into nested structure layers and additive detail
components by solving an edge-guided quadratic separation at every scale.
"""

from .applications import (
    AbstractionConfig,
    RetinexConfig,
    abstract,
    guidance_from_reference,
    quantize,
    retinex_enhance,
    retinex_illumination,
)
from .errors import (
    ConvergenceFailure,
    EmptySequence,
    FormatError,
    HipeError,
    InvalidParameter,
    IoError,
    ParseError,
    ShapeMismatch,
)
from .guidance import (
    ReferenceGradient,
    ScaleSchedule,
    edge_confidence,
    init_reference,
    load_guidance,
    modulate_reference,
    nms_thin,
    reference_from_gradient,
    self_guidance,
    step_reference,
    threshold_guidance,
)
from .image import GradientField, as_image, clamp01, gradient, load_image, save_image
from .metrics import GccReport, gcc, hierarchy_report, total_variation
from .peeler import PeelConfig, PeelSystem, assemble, objective, peel_once, solve
from .pipeline import (
    PeelHierarchy,
    ScalePeel,
    guidance_sequence,
    peel,
    peel_with_external_guidance,
    save_hierarchy,
    spurious_detail_fraction,
)

__version__ = "0.1.0"
