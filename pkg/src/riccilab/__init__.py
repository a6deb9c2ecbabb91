"""Numerical laboratory for normalized Ricci flows on symmetry-reduced spheres."""

from .params import FlowParams
from .metrics import (
    BergerS3,
    ConformalSphere,
    Perturbation,
    RotSym,
    ScalarField,
    VectorFieldRep,
    WeightedMeasure,
    bumped_rotsym,
    metric_as_perturbation,
    metric_components,
    metric_from_components,
    metric_plus,
    perturbed_berger,
    random_tangent_perturbation,
    round_berger,
    round_conformal,
    round_metric,
    round_rotsym,
    sphere_volume,
    zero_perturbation,
    zero_vector_field,
)
from .geometry import (
    diameter,
    double_weighted_divergence,
    hessian,
    holder_proxy_norm,
    l2_weighted_inner,
    l2_weighted_norm,
    lie_derivative,
    ricci,
    riemann_sup_norm,
    scalar_curvature,
    sobolev_norm,
    volume,
    weighted_divergence,
    weighted_laplacian,
    weighted_measure,
)

from .entropy import (
    EntropyResult,
    GradMu,
    MinimizeOpts,
    grad_mu,
    minimize_mu,
    mu_berger_closed,
    mu_conformal_closed,
    normalizing_constant,
    soliton_residual,
    w_functional,
    weighted_spectral_gap,
)
from .flow import (
    ExtensionReport,
    FlowState,
    StepperOpts,
    StepRecord,
    Trajectory,
    canonical_solution,
    deturck_pullback,
    diffeo_flow,
    extension_monitor,
    run_coupled,
    run_deturck,
    run_modified,
    run_modified_scale_projected,
    run_normalized,
)
from .linearization import (
    GaugeFixResult,
    SolitonRef,
    SpectrumReport,
    chart_E,
    chart_E_inv,
    g_functional,
    gauge_fix,
    killing_projection,
    make_soliton_ref,
    psi_term,
    ricci_prime,
    second_variation_apply,
    solve_phi,
    spectrum,
)

__version__ = "0.1.0"
