"""Clustering-based asymmetric metric learning for unlabeled cross-view matching."""
from .core import (
    BlockData,
    CamelConfig,
    CamelError,
    DataError,
    FeatureSet,
    IndicatorMatrix,
    NumericalError,
    ProjectionModel,
    build_block_data,
    build_consistency_matrix,
    indicator_from_assignment,
    objective_sum_form,
    objective_trace_form,
)
from .clustering import KMeansResult, assign_to_centroids, kmeans
from .solver import (
    SolverState,
    camel_fit,
    camel_fit_supervised,
    cluster_purity_report,
    cmel_fit,
    solve_projection,
)
from .matcheval import (
    GalleryProbeSplit,
    RankingResult,
    asymmetric_distance,
    build_split,
    evaluate,
    mean_average_precision,
    rank_gallery,
)
from .data import (
    SyntheticSpec,
    generate_synthetic,
    load_features,
    load_model,
    pca_reduce,
    save_features,
    save_model,
)

__version__ = "0.1.0"
