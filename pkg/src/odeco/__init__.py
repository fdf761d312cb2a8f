"""Estimation of orthogonally decomposable (odeco) tensors.

Power iteration with deflation, randomized slicing initializers, noise
functionals and Monte Carlo tooling to check perturbation bounds.
"""

from .analysis import (
    asymptotic_statistics,
    first_order_residual,
    match_components,
    perturbation_report,
    sin_angle,
)
from .decomposition import (
    EstimatedDecomposition,
    FixedPointConfig,
    decompose_with_deflation,
    deflate,
    noiseless_decompose,
    power_iteration,
)
from .initialization import hosvd_projection, initialize_general, initialize_incoherent
from .noise_lab import NoiseSpec, error_functionals, sample_noise, split_mode_p
from .odeco_model import OdecoDecomposition, random_odeco, section3_example, synthesize
from .tensor_core import (
    contract,
    gram_schmidt,
    inner,
    khatri_rao,
    matricize,
    matricize_pair,
    mode_multiply,
    outer_rank_one,
    spectral_norm_estimate,
    svd,
)

__version__ = "0.1.0"
