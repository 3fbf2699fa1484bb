"""Interconnection-neutral supply functions for networks of LTI systems.

Given a network of linear systems and an additive quadratic Lyapunov
function, the package splits the certificate into quadratic supplies on the
links such that every system is strictly dissipative with its own supplies
and the two supplies of each link cancel.  It also certifies that stability
survives scaling links or systems out of the network.
"""

__version__ = "0.1.0"

from .errors import (
    CycleDetected,
    GammaSearchExhausted,
    HypothesisViolated,
    IllPosed,
    InvalidBasis,
    InvalidInput,
    InvalidMatrix,
    NeutralSupplyError,
    NotAcyclic,
    NotALyapunovFunction,
    PreconditionFailed,
    RankAssumption,
    SingularPivot,
    Undecided,
    UnknownSystem,
)
from .linalg import DEFAULT_TOL, Tolerance
from .model import (
    InterconnectionSet,
    LtiSystem,
    NetworkGraph,
    Port,
    QuadraticSupply,
    StorageCertificate,
    closed_loop,
    closed_loop_matrix,
    evaluate_supply,
    lyapunov_matrix,
    mirror,
    scaling_matrix,
    well_posedness,
)
from .lmi import (
    FeasibilityResult,
    LmiProblem,
    dissipativity_lmi,
    dissipativity_residual,
    find_additive_lyapunov,
    find_multiplier,
    robust_dissipativity_check,
    robust_stability_check,
)
from .decompose import (
    DEFAULT_CONFIG,
    DecompositionConfig,
    EdgeSupplyPair,
    build_workspace,
    construct_neutral_pair,
    construct_pair,
    construct_sign_structured,
    extend_rank_deficient,
    rank_factorization,
    verify_pair,
)
from .netgraph import (
    Grouping,
    condense,
    condense_certificate,
    decompose_acyclic,
    is_acyclic,
    isolate_system,
    lump,
    split_at_edge,
)
from .robustness import (
    alpha_sweep_dissipativity,
    edge_alpha_sweep,
    edge_removal_survey,
    link_scaling_certificate,
    system_removal_certificate,
)
from .dcgrid import dcgrid_network

__all__ = [name for name in dir() if not name.startswith("_")]
