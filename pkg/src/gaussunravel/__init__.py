"""Gaussian unravelings of open-system dynamics with squeezed-state noise."""

from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import BACKEND
from .correlations import (
    DEFAULT_EPSILON,
    CorrelationKernel,
    MarkovKernel,
    ModeSet,
    SpectralDensityModel,
    SpectralKind,
    TimeGrid,
    build_kernel,
    decoherence_exponent,
    discretize_spectral_density,
    integrated_rates,
    markov_kernel,
)
from .entanglement import (
    CONCURRENCE,
    EntanglementReport,
    SLInvariantMeasure,
    bound_vs_exact,
    check_measure,
    concurrence2,
    dephased_density,
    mean_entanglement_bound,
    scaling_ratio,
    wootters_concurrence,
)
from .noise import (
    CovarianceSampler,
    IndefiniteCovarianceError,
    NoiseTrajectory,
    estimate_correlations,
    sample_mode_amplitudes,
    sample_noise_covariance,
    sample_noise_modesum,
    stream,
)
from .optimize import (
    SqueezingRule,
    bound_at_horizon,
    custom_rule,
    horizon_bound_curve,
    optimal_rule,
    phase_rule,
    restore_rule,
    search_squeezing,
    zero_rule,
)
from .sse import (
    DephasingChannel,
    DephasingSystem,
    RelativeStateTrajectory,
    average_density_matrix,
    bell_state,
    propagate_dephasing,
    run_ensemble,
)

__all__ = sorted(
    name
    for name, obj in globals().items()
    if not name.startswith("_") and name != "annotations" and not isinstance(obj, type(_kernels))
)
