"""Graph refinement by mean-field inference on an edge MRF, trained as a Mean Field Network."""

__version__ = "0.1.0"

from .graph import (
    EPS_CLAMP,
    AdjacencyEstimate,
    CandidateGraph,
    EdgeBeliefs,
    GradientSet,
    GraphError,
    ModelParams,
    NodeFeatures,
    build_knn_neighborhoods,
    symmetrize_neighborhoods,
    validate_graph,
)
from .inference import (
    ElboBreakdown,
    MfaSchedule,
    degree_expectation,
    elbo,
    gamma,
    gamma_all,
    mfa_step_parallel,
    mfa_sweep_sequential,
    run_mfa,
    threshold,
)
from .network import TrainConfig, backward, bce_loss, forward, infer, init_params, train

__all__ = [
    "EPS_CLAMP",
    "AdjacencyEstimate",
    "CandidateGraph",
    "EdgeBeliefs",
    "ElboBreakdown",
    "GradientSet",
    "GraphError",
    "MfaSchedule",
    "ModelParams",
    "NodeFeatures",
    "TrainConfig",
    "backward",
    "bce_loss",
    "build_knn_neighborhoods",
    "degree_expectation",
    "elbo",
    "forward",
    "gamma",
    "gamma_all",
    "infer",
    "init_params",
    "mfa_step_parallel",
    "mfa_sweep_sequential",
    "run_mfa",
    "symmetrize_neighborhoods",
    "threshold",
    "train",
    "validate_graph",
]
