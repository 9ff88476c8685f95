"""Simulation laboratory for the zero-noise limit of power-law singular SDEs.

The model is dX = b(X) dt + eps dW^H with b(x) = A+ x^gamma for x > 0 and
-A- (-x)^gamma for x < 0, driven by fractional Brownian motion.  The lab
synthesizes exact fBm, integrates the regularized dynamics, detects which
extremal solution a path selects, and checks the supporting constants
ledger and pathwise bounds at desk scale.
"""

from .config import PACKAGE_VERSION as __version__
from .constants import (
    ConstantsLedger,
    PartialLedger,
    kappa_ceiling,
    max_feasible_kappa,
    solve_fixed,
    solve_stage2,
)
from .errors import (
    ConfigError,
    DomainError,
    FbmSynthesisError,
    InfeasibleError,
    IntegrationError,
    Refusal,
)
from .fbm import (
    NoiseBundle,
    PastWindow,
    bridge_decompose,
    fbm_increments_batch,
    generate_fbm_exact,
    kernel_G,
    make_noise,
    norm_L,
    norm_M,
    norm_S,
    past_process,
    riemann_liouville,
    riemann_liouville_offset,
)
from .flow import (
    ModelParams,
    TransitionPoint,
    comparison_envelope,
    drift,
    extremal_solution,
    flow_phi,
    max_deviation,
    transition_point,
)
from .grids import Path, TimeGrid
from .integrate import ScalingReport, integrate, integrate_batch, scaling_check
from .ledger_check import LedgerReport, verify_ledger
from .runner import BatchResult, build_summary, run_batch, run_sweep
from .selection import (
    ProbReport,
    SelectionOutcome,
    TailFit,
    admissibility_check,
    detect_selection,
    detect_selection_batch,
    estimate_probs,
    geometric_ladder,
    holder_ladder_check,
    tail_fit,
    upper_bound_check,
)

__all__ = [
    "__version__",
    "BatchResult",
    "ConfigError",
    "ConstantsLedger",
    "DomainError",
    "FbmSynthesisError",
    "InfeasibleError",
    "IntegrationError",
    "LedgerReport",
    "ModelParams",
    "NoiseBundle",
    "PartialLedger",
    "Path",
    "PastWindow",
    "ProbReport",
    "Refusal",
    "ScalingReport",
    "SelectionOutcome",
    "TailFit",
    "TimeGrid",
    "TransitionPoint",
    "admissibility_check",
    "bridge_decompose",
    "build_summary",
    "comparison_envelope",
    "detect_selection",
    "detect_selection_batch",
    "drift",
    "estimate_probs",
    "extremal_solution",
    "fbm_increments_batch",
    "flow_phi",
    "generate_fbm_exact",
    "geometric_ladder",
    "holder_ladder_check",
    "integrate",
    "integrate_batch",
    "kappa_ceiling",
    "kernel_G",
    "make_noise",
    "max_deviation",
    "max_feasible_kappa",
    "norm_L",
    "norm_M",
    "norm_S",
    "past_process",
    "riemann_liouville",
    "riemann_liouville_offset",
    "run_batch",
    "run_sweep",
    "scaling_check",
    "solve_fixed",
    "solve_stage2",
    "tail_fit",
    "transition_point",
    "upper_bound_check",
    "verify_ledger",
]
