"""Treelet transform with PCA / hierarchical-clustering baselines, dependence simulators and CV leakage tooling."""

from .baselines import HcTree, PcaModel, hc_fit, pca_fit
from .core import (
    CoarseRepresentation,
    Dendrogram,
    JacobiRotation,
    TreeletBasis,
    forward,
    inverse,
    jacobi_angle,
    most_similar_pair,
    select_features,
    transform,
    treelet_fit,
)
from .data import (
    DataMatrix,
    SimilarityMatrix,
    global_normalize,
    load_csv,
    sample_correlation,
    sample_covariance,
)
from .errors import DataError, TreeletError, UsageError
from .evaluate import energy_curve, merge_purity, nearest_centroid_cv
from .simgen import gen_block, gen_driver_modulator, gen_global_factor, log_transform

__version__ = "0.1.0"
