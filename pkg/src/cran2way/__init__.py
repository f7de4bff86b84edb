"""Multi-pair two-way C-RAN: lattice compression, compute-and-forward and rate optimisation."""

from ._kernels import BACKEND
from .downlink import DownlinkSolution, EndToEndResult, end_to_end_rates, ido
from .errors import (
    ConfigError,
    CranError,
    DimensionMismatch,
    Infeasible,
    InfeasibleStart,
    InitializationFailed,
    IoError,
    LineSearchFailed,
    NoFeasibleSolution,
    NoSignChange,
    NotInvertibleModQ,
    NotPositiveDefinite,
    RankDeficient,
    SelectionFailed,
    SingularPsi,
    TooLarge,
)
from .harness import SweepSpec, aggregate, emit_csv, run_sweep
from .system import SystemConfig, make_adjacent_pairing, sample_channel
from .uplink import UplinkSolution, iuo, optimize_uplink, update_precoder

__all__ = [
    "BACKEND",
    "ConfigError",
    "CranError",
    "DimensionMismatch",
    "DownlinkSolution",
    "EndToEndResult",
    "Infeasible",
    "InfeasibleStart",
    "InitializationFailed",
    "IoError",
    "LineSearchFailed",
    "NoFeasibleSolution",
    "NoSignChange",
    "NotInvertibleModQ",
    "NotPositiveDefinite",
    "RankDeficient",
    "SelectionFailed",
    "SingularPsi",
    "SweepSpec",
    "SystemConfig",
    "TooLarge",
    "UplinkSolution",
    "aggregate",
    "emit_csv",
    "end_to_end_rates",
    "ido",
    "iuo",
    "make_adjacent_pairing",
    "optimize_uplink",
    "run_sweep",
    "sample_channel",
    "update_precoder",
]
