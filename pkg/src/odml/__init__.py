"""Distance metric learning with orthogonality-promoting regularization.

Learns Mahalanobis metrics (PSD matrix form) and low-rank projections from
labeled data using hinge losses on similar/dissimilar pairs. Three penalty
families push the learned projection toward orthonormal rows; each family
exists in a nonconvex form for rectangular projections and a convex form
for PSD matrices, the latter with exact spectral proximal operators.
Utilities check the theoretical imbalance, trace, and generalization
bounds numerically.
"""

from .data import (
    Dataset,
    PairBatch,
    SynthSpec,
    class_means,
    enumerate_pairs,
    load_csv,
    minmax_normalize,
    oversample,
    pca_basis,
    pca_reduce,
    sample_batch,
    save_csv,
    stratified_split,
    synth_generate,
)
from .estimators import MahalanobisMetricLearner, ProjectionMetricLearner
from .evaluation import (
    EvalReport,
    balance_score,
    compactness_score,
    evaluate,
    imbalance_factor,
    npv,
    retrieval_auc,
)
from .exceptions import (
    BoundInapplicableError,
    DegenerateMeansError,
    DomainError,
    EmptySelectionError,
    InvalidBatchError,
    InvalidDatasetError,
    InvalidInputError,
    NotPSDError,
    NumericalFailureError,
    OdmlError,
    ParseError,
    SingularMatrixError,
)
from .linalg import (
    EigenDecomposition,
    condition_number,
    psd_factorize,
    spectral_apply,
    sym_eig,
    wright_omega,
)
from .model_io import (
    load_model,
    save_model,
    save_report_csv,
    save_report_json,
    save_training_log,
)
from .optim import (
    EpochRecord,
    MahalanobisMetric,
    ProjectionMatrix,
    TrainConfig,
    config_hash,
    mdml_loss,
    mdml_subgradient,
    pdml_loss,
    pdml_subgradient,
    train_mdml,
    train_pdml,
)
from .regularizers import (
    ProxSuiteResult,
    RegularizerSpec,
    ScalarProxProblem,
    bregman_divergence,
    grad_convex,
    grad_nonconvex,
    omega_convex,
    omega_nonconvex,
    prox_consistency_suite,
    prox_matrix,
    prox_scalar,
    prox_scalar_oracle,
)
from .theory import (
    CondBoundReport,
    GenBoundInputs,
    TraceLemmaReport,
    check_cond_bounds,
    check_trace_lemmas,
    cond_curve,
    cond_curve_inverse,
    generalization_bound,
    ldd_imbalance_bound,
    mean_distance_ratio,
    vnd_imbalance_bound,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # data
    "Dataset",
    "PairBatch",
    "SynthSpec",
    "class_means",
    "enumerate_pairs",
    "load_csv",
    "minmax_normalize",
    "oversample",
    "pca_basis",
    "pca_reduce",
    "sample_batch",
    "save_csv",
    "stratified_split",
    "synth_generate",
    # estimators
    "MahalanobisMetricLearner",
    "ProjectionMetricLearner",
    # evaluation
    "EvalReport",
    "balance_score",
    "compactness_score",
    "evaluate",
    "imbalance_factor",
    "npv",
    "retrieval_auc",
    # exceptions
    "BoundInapplicableError",
    "DegenerateMeansError",
    "DomainError",
    "EmptySelectionError",
    "InvalidBatchError",
    "InvalidDatasetError",
    "InvalidInputError",
    "NotPSDError",
    "NumericalFailureError",
    "OdmlError",
    "ParseError",
    "SingularMatrixError",
    # linalg
    "EigenDecomposition",
    "condition_number",
    "psd_factorize",
    "spectral_apply",
    "sym_eig",
    "wright_omega",
    # model io
    "load_model",
    "save_model",
    "save_report_csv",
    "save_report_json",
    "save_training_log",
    # optimization
    "EpochRecord",
    "MahalanobisMetric",
    "ProjectionMatrix",
    "TrainConfig",
    "config_hash",
    "mdml_loss",
    "mdml_subgradient",
    "pdml_loss",
    "pdml_subgradient",
    "train_mdml",
    "train_pdml",
    # regularizers
    "ProxSuiteResult",
    "RegularizerSpec",
    "ScalarProxProblem",
    "bregman_divergence",
    "grad_convex",
    "grad_nonconvex",
    "omega_convex",
    "omega_nonconvex",
    "prox_consistency_suite",
    "prox_matrix",
    "prox_scalar",
    "prox_scalar_oracle",
    # theory
    "CondBoundReport",
    "GenBoundInputs",
    "TraceLemmaReport",
    "check_cond_bounds",
    "check_trace_lemmas",
    "cond_curve",
    "cond_curve_inverse",
    "generalization_bound",
    "ldd_imbalance_bound",
    "mean_distance_ratio",
    "vnd_imbalance_bound",
]
