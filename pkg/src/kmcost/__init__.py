"""Kernelized matrix costs over Gaussian Gram matrices.

Closed-form Gaussian mixture algebra, four matrix costs with analytic
center gradients, spectral diagnostics of the underlying decompositions,
and two trainers (a mixture-output network and a Gaussian-product patch
classifier) plus a CLI reproducing the desk-scale experiments.
"""

__version__ = "0.1.0"

from .costs import (
    CostKind,
    CostReport,
    RegularizationPolicy,
    SingularGramError,
    evaluate,
    matrix_matrix_cost,
    scalar_cost,
    svd_cost,
    vector_matrix_cost,
)
from .gaussian_algebra import (
    EXP_ONLY,
    FULL_PDF,
    GaussianComponent,
    GaussianMixture,
    GramBundle,
    SampleBatch,
    build_gram_bundle,
    gauss_gram,
    gauss_inner,
    mixture_inner,
    mixture_norm,
    scaled_sq_dist,
)

__all__ = [
    "CostKind",
    "CostReport",
    "RegularizationPolicy",
    "SingularGramError",
    "evaluate",
    "matrix_matrix_cost",
    "scalar_cost",
    "svd_cost",
    "vector_matrix_cost",
    "EXP_ONLY",
    "FULL_PDF",
    "GaussianComponent",
    "GaussianMixture",
    "GramBundle",
    "SampleBatch",
    "build_gram_bundle",
    "gauss_gram",
    "gauss_inner",
    "mixture_inner",
    "mixture_norm",
    "scaled_sq_dist",
    "__version__",
]
