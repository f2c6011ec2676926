"""Time-evolution engines: Schrödinger, Lindblad and quantum trajectories."""

from .common import DecoherenceRates, TimeGrid, collapse_operators
from .guard import TruncationGuard, mode_leakage
from .lindblad import LindbladResult, propagate_lindblad
from .mcwf import (
    JumpRecord,
    TrajectoryEnsemble,
    TrajectoryResult,
    child_seed,
    mcwf_ensemble,
    mcwf_trajectory,
)
from .schrodinger import SchrodingerResult, propagate_schrodinger

__all__ = [
    "DecoherenceRates", "TimeGrid", "collapse_operators", "TruncationGuard", "mode_leakage",
    "LindbladResult", "propagate_lindblad", "JumpRecord", "TrajectoryEnsemble", "TrajectoryResult",
    "child_seed", "mcwf_ensemble", "mcwf_trajectory", "SchrodingerResult", "propagate_schrodinger",
]
