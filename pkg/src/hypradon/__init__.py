"""Fast hyperbolic Radon transforms through log-polar FFT convolution."""
from .grid import CmpGather, GridError, RadonImage, RegularGrid2, ScaleRecord
from .operators import (OperatorPlan, PlanError, adjoint, direct_adjoint, direct_forward,
                        estimate_norm, forward, plan)
from .sparse import IstaConfig, IstaError, IstaTrace, ista, ista_masked, mute_and_split, soft_threshold
from .synthetics import EventSpec, MaskSpec, make_mask, synth_gather

__version__ = "0.1.0"

__all__ = [
    "CmpGather", "EventSpec", "GridError", "IstaConfig", "IstaError", "IstaTrace", "MaskSpec",
    "OperatorPlan", "PlanError", "RadonImage", "RegularGrid2", "ScaleRecord", "adjoint",
    "direct_adjoint", "direct_forward", "estimate_norm", "forward", "ista", "ista_masked",
    "make_mask", "mute_and_split", "plan", "soft_threshold", "synth_gather",
]
