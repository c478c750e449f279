"""Point-cloud registration and product-basket prediction for log scans.

The library aligns 3D log scans with point-to-point ICP (closed-form
quaternion registration inside the iterative loop), uses the converged
mean-square error as a similarity distance to find the most-resembling
training log for an unseen scan, predicts its product basket, and scores
predictions with six multi-output metrics.
"""

from .correspondence import (
    CorrespondenceSet,
    SpatialIndex,
    build_index,
    match_correspondences,
    nearest_point,
)
from .dataset import Dataset, SplitSpec, drop_empty, split, split_indices
from .errors import InvalidInputError, LogmatchError, NumericalError, ParseError
from .geometry import (
    Point3,
    PointCloud,
    RigidTransform,
    UnitQuaternion,
    apply_transform,
    centroid,
    quaternion_to_rotation,
)
from .metrics import (
    MetricConfig,
    ScoredPair,
    ScoreReport,
    area_score,
    augmented_hamming_distance,
    evaluate,
    filter_pairs,
    hamming_distance,
    prediction_score,
    production_score,
    zero_one,
)
from .predictor import (
    LogFeatures,
    LogRecord,
    PredictionOutcome,
    ProductBasket,
    extract_features,
    icp_nn_predict,
    icp_nn_predict_batch,
    knn_feature_predict,
    mean_predict,
)
from .registration import (
    IcpConfig,
    IcpIteration,
    IcpTrace,
    RegistrationResult,
    TerminalReason,
    compute_registration,
    cross_covariance,
    icp_align,
    icp_distance,
    max_eigenvector,
    mse,
    quaternion_alignment_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "CorrespondenceSet",
    "Dataset",
    "IcpConfig",
    "IcpIteration",
    "IcpTrace",
    "InvalidInputError",
    "LogFeatures",
    "LogRecord",
    "LogmatchError",
    "MetricConfig",
    "NumericalError",
    "ParseError",
    "Point3",
    "PointCloud",
    "PredictionOutcome",
    "ProductBasket",
    "RegistrationResult",
    "RigidTransform",
    "ScoreReport",
    "ScoredPair",
    "SpatialIndex",
    "SplitSpec",
    "TerminalReason",
    "UnitQuaternion",
    "apply_transform",
    "area_score",
    "augmented_hamming_distance",
    "build_index",
    "centroid",
    "compute_registration",
    "cross_covariance",
    "drop_empty",
    "evaluate",
    "extract_features",
    "filter_pairs",
    "hamming_distance",
    "icp_align",
    "icp_distance",
    "icp_nn_predict",
    "icp_nn_predict_batch",
    "knn_feature_predict",
    "match_correspondences",
    "max_eigenvector",
    "mean_predict",
    "mse",
    "nearest_point",
    "prediction_score",
    "production_score",
    "quaternion_alignment_matrix",
    "quaternion_to_rotation",
    "split",
    "split_indices",
    "zero_one",
]
