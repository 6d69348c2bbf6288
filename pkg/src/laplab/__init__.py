"""Graph-Laplacian constructions on sampled manifolds and their convergence to Laplace-Beltrami."""

from .analysis import align_and_score, build_references, fit_loglog_slope, pointwise_error
from .eigen import ConvergenceError, SpectralResult, rayleigh_quotient, solve_lowest
from .estimator import GraphLaplacianEigenmap
from .graph import (
    DisconnectedGraphError,
    GraphOperators,
    KernelSpec,
    bilinear_form,
    build_affinity,
    build_operators,
    degree_diagnostic,
    dirichlet_form,
    heat_quadratic_forms,
    laplacian_apply,
)
from .harness import (
    ExperimentConfig,
    SweepResult,
    run_form_check,
    run_pointwise_curve,
    run_sweep,
    run_validation_suite,
)
from .manifold import (
    CIRCLE,
    SPHERE,
    analytic_spectrum,
    gaussian_surrogate,
    get_density,
    get_manifold,
    heat_kernel,
    sample,
)

__version__ = "0.1.0"
