"""Adaptive estimation of bandlimited graph signals under impulsive noise."""

from .analysis import (
    MetricsTrace,
    StabilityContext,
    StepSizeError,
    detect_convergence,
    mad,
    msd,
    spectral_radius,
    stability_context,
    step_size_bound,
    theoretical_msd,
)
from .estimators import (
    ESTIMATORS,
    EstimatorConfig,
    EstimatorState,
    glmp_step,
    glms_step,
    gsign_step,
    run_estimation,
)
from .graph import Graph, build_laplacian, knn_geographic_graph, random_sensor_graph
from .noise import NoiseModel, flom_inverse_moment, make_rng, sample
from .spectral import (
    eigendecompose,
    gft,
    greedy_sampling,
    igft,
    jacobi_eigh,
    lowpass_bandlimit,
    make_bandlimit,
)

__version__ = "0.1.0"
