"""Almost-Poisson brackets, gauge transformations by 3-forms and gauge momenta
for nonholonomic systems with symmetry."""

__version__ = "0.1.0"

from .brackets import (  # noqa: E402
    BivectorBlocks,
    PhaseState,
    ThreeFormSpec,
    gauge_transform,
    lambda_from_generators,
    pi_nh,
)
from .dynamics import IntegratorConfig, Trajectory, integrate  # noqa: E402
from .gauge import GaugeGenerator, skew_test  # noqa: E402
from .geometry import MechanicalSystem, frame_at  # noqa: E402

__all__ = [
    "BivectorBlocks",
    "GaugeGenerator",
    "IntegratorConfig",
    "MechanicalSystem",
    "PhaseState",
    "ThreeFormSpec",
    "Trajectory",
    "frame_at",
    "gauge_transform",
    "integrate",
    "lambda_from_generators",
    "pi_nh",
    "skew_test",
]
