"""DAG structure learning by sparse relaxations over the permutahedron.

The package factors DAG discovery into learning a node ordering (a sparse
distribution over permutations driven by a per-node score vector) and pruning
the ordering's complete DAG with a pluggable sparse edge estimator.  Every
graph it touches is acyclic by construction, during training and after.
"""

from .datagen import (
    GraphSpec,
    SemSpec,
    load_csv,
    load_edgelist,
    sample_dag,
    sample_data,
    sortnregress,
)
from .errors import ConfigError, DaguerroError, DataError, NumericError
from .learner import (
    FitResult,
    LearnerConfig,
    TrainTrace,
    extract_final,
    fit,
    fit_bilevel,
    fit_joint,
    init_theta,
    postprocess_threshold,
)
from .metrics import complete_dag_shd, f1, segment_crossings, shd, sid, stable_interval
from .perms import Permutation, adjacent_transpose, enumerate_all, score, sort_oracle, top_k
from .sem import (
    Dataset,
    EdgeMask,
    EdgeParameters,
    FinalGraph,
    finalize_l0,
    fit_l0,
    fit_lars,
    is_acyclic,
    loss_ev_gaussian,
    loss_mse,
    predict,
    standardize,
)
from .sparse_ops import (
    MarginalPoint,
    SparseOrderDistribution,
    backward_theta,
    marginal,
    simplex_project,
    sparsemap,
    topk_sparsemax,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DaguerroError",
    "DataError",
    "Dataset",
    "EdgeMask",
    "EdgeParameters",
    "FinalGraph",
    "FitResult",
    "GraphSpec",
    "LearnerConfig",
    "MarginalPoint",
    "NumericError",
    "Permutation",
    "SemSpec",
    "SparseOrderDistribution",
    "TrainTrace",
    "adjacent_transpose",
    "backward_theta",
    "complete_dag_shd",
    "enumerate_all",
    "extract_final",
    "f1",
    "finalize_l0",
    "fit",
    "fit_bilevel",
    "fit_joint",
    "fit_l0",
    "fit_lars",
    "init_theta",
    "is_acyclic",
    "load_csv",
    "load_edgelist",
    "loss_ev_gaussian",
    "loss_mse",
    "marginal",
    "postprocess_threshold",
    "predict",
    "sample_dag",
    "sample_data",
    "score",
    "segment_crossings",
    "shd",
    "sid",
    "simplex_project",
    "sort_oracle",
    "sortnregress",
    "sparsemap",
    "stable_interval",
    "standardize",
    "top_k",
    "topk_sparsemax",
]
