"""Shrinker entropy: the W-functional, the constrained minimization defining
mu(g, tau), the minimizer equation, the entropy gradient, and the weighted
spectral gap.

On the homogeneous classes every admissible potential is constant, so the
minimizer and mu are closed forms.  On RotSym grids the minimizer equation

    tau (2 Lap f - |grad f|^2 + R) + (f - n) = mu,   mass(f) = 1

is solved as a nodal Newton system (w-substitution projected CG supplies the
initial iterate away from the warm-start regime), which drives the displayed
residual to machine precision.  The gradient of the resulting discrete
mu(g) is computed exactly through the implicit function theorem (complex-step
metric derivatives plus one adjoint solve) and returned as the tensor
-tau (Ric + Hess f - g/(2 tau)) in the dnu Riesz representation; this keeps
the first-variation identity exact at the discrete level, which a direct
stencil evaluation misses by O(h^2).
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import rotkernels as rk
from .errors import (
    PositivityLossError,
    PreconditionError,
    RicciLabError,
    SolverFailure,
    StaleInputError,
    UnnormalizedInputError,
)
from .geometry import (
    berger_scalar,
    hessian,
    l2_weighted_norm,
    ricci,
    volume,
    weighted_measure,
)
from .grid import EVEN, d1
from .metrics import (
    BergerS3,
    ConformalSphere,
    MetricRep,
    Perturbation,
    RotSym,
    ScalarField,
    check_same_class,
    constant_scalar_field,
    metric_as_perturbation,
    smooth_perturbation_basis,
    sphere_volume,
)
from .params import FlowParams

DEFAULT_TOL_HOMOGENEOUS = 1e-8
DEFAULT_TOL_ROTSYM = 1e-6
# roundoff floor of the nodal residual: the Laplacian amplifies float noise
# by ~1/h^2, so machine zero sits near 1e-12..1e-11 at desk resolutions
NEWTON_TARGET = 3e-11


@dataclass(frozen=True)
class EntropyResult:
    """Outcome of the constrained entropy minimization at fixed tau."""

    mu: float
    minimizer: ScalarField
    residual: float
    iterations: int
    mass_defect: float


@dataclass(frozen=True)
class GradMu:
    """Entropy gradient -tau(Ric + Hess f - g/(2 tau)) and its L^2(dnu) norm."""

    tensor: Perturbation
    l2_dnu_norm: float


@dataclass(frozen=True)
class MinimizeOpts:
    tol: float | None = None
    max_iter: int = 5000
    newton_max: int = 40
    warm_start: ScalarField | None = None
    seed: int = 0


# ---------------------------------------------------------------------------
# closed forms


def normalizing_constant(g: MetricRep, params: FlowParams) -> float:
    """The constant f with unit weighted mass: log Vol - (n/2) log(4 pi tau)."""
    n = g.dim
    return math.log(volume(g)) - 0.5 * n * math.log(4.0 * math.pi * params.tau)


def mu_conformal_closed(n: int, c: float, tau: float) -> float:
    return (
        tau * n * (n - 1) / c
        + 0.5 * n * math.log(c)
        + math.log(sphere_volume(n))
        - 0.5 * n * math.log(4.0 * math.pi * tau)
        - n
    )


def mu_berger_closed(coeffs, tau: float) -> float:
    a, b, c = np.asarray(coeffs, dtype=float)
    vol = math.sqrt(a * b * c) * sphere_volume(3)
    return tau * berger_scalar(a, b, c) + math.log(vol) - 1.5 * math.log(4.0 * math.pi * tau) - 3.0


# ---------------------------------------------------------------------------
# W-functional


def w_functional(g: MetricRep, f: ScalarField, params: FlowParams) -> float:
    """W(g, f, tau) by closed form / quadrature; requires unit weighted mass."""
    check_same_class(g, f)
    n = g.dim
    tau = params.tau
    meas = weighted_measure(g, f, params)
    if abs(meas.total_mass - 1.0) > 1e-6:
        raise UnnormalizedInputError(
            f"weighted mass {meas.total_mass} differs from 1 beyond 1e-6"
        )
    if isinstance(g, ConformalSphere):
        R = n * (n - 1) / g.c
        return (tau * R + f.const - n) * meas.total_mass
    if isinstance(g, BergerS3):
        R = berger_scalar(*g.coeffs)
        return (tau * R + f.const - n) * meas.total_mass
    phi2 = g.phi**2
    psi2 = g.psi**2
    h = g.grid.h
    R = rk.rot_curvature(phi2, psi2, h, n, profile="quadrature")["scal"]
    fs = d1(f.values, h, EVEN, 4) / g.phi
    integrand = tau * (fs * fs + R) + (f.values - n)
    return float(np.sum(meas.weights * integrand))


# ---------------------------------------------------------------------------
# RotSym nodal system


def _rot_el_residual(fvals, mu, phi2, psi2, h, n, tau):
    """Nodal minimizer-equation residual and mass defect (complex safe)."""
    R = rk.rot_curvature(phi2, psi2, h, n, profile="quadrature")["scal"]
    lap = rk.rot_laplacian_apply(phi2, psi2, h, n, fvals, profile="quadrature")
    phi = np.sqrt(phi2)
    fs = d1(fvals, h, EVEN, 4) / phi
    res = tau * (2.0 * lap - fs * fs + R) + (fvals - n) - mu[..., None]
    psi = np.sqrt(np.where(np.real(psi2) <= 0.0, 0.0, psi2))
    w = rk.rot_volume_weights(phi, psi, h, n)
    scale = (4.0 * math.pi * tau) ** (-n / 2.0)
    mass = np.sum(w * np.exp(-fvals) * scale, axis=-1) - 1.0
    return np.concatenate([res, mass[..., None]], axis=-1)


def _rot_el_jacobian(fvals, phi2, psi2, h, n, tau):
    """Exact Jacobian of the nodal system in (f, mu)."""
    m = fvals.shape[0]
    phi = np.sqrt(phi2)
    fs = d1(fvals, h, EVEN, 4) / phi

    def lin(v):
        lap = rk.rot_laplacian_apply(phi2, psi2, h, n, v, profile="quadrature")
        vs = d1(v, h, EVEN, 4) / phi
        return tau * (2.0 * lap - 2.0 * fs * vs) + v

    J = np.zeros((m + 1, m + 1))
    J[:m, :m] = rk.operator_matrix(lin, m)
    J[:m, m] = -1.0
    psi = np.sqrt(np.where(psi2 <= 0.0, 0.0, psi2))
    w = rk.rot_volume_weights(phi, psi, h, n)
    scale = (4.0 * math.pi * tau) ** (-n / 2.0)
    J[m, :m] = -w * np.exp(-fvals) * scale
    return J


def _rot_newton(g: RotSym, params: FlowParams, f0, newton_max):
    phi2 = g.phi**2
    psi2 = g.psi**2
    h = g.grid.h
    n = g.n
    tau = params.tau
    f = f0.copy()
    mu = 0.0
    # initial mu from the residual mean keeps the first step small
    r0 = _rot_el_residual(f, np.asarray(0.0), phi2, psi2, h, n, tau)[:-1]
    mu = float(np.mean(r0))
    best = None
    for it in range(newton_max):
        F = _rot_el_residual(f, np.asarray(mu), phi2, psi2, h, n, tau)
        rnorm = float(np.max(np.abs(F)))
        if best is None or rnorm < best[0]:
            best = (rnorm, f.copy(), mu)
        if rnorm < NEWTON_TARGET:
            return f, mu, rnorm, it
        J = _rot_el_jacobian(f, phi2, psi2, h, n, tau)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"singular minimizer Jacobian: {exc}") from exc
        if not np.all(np.isfinite(step)):
            break
        # damped acceptance: backtrack on residual growth
        lam = 1.0
        for _ in range(30):
            fn = f - lam * step[:-1]
            mun = mu - lam * step[-1]
            Fn = _rot_el_residual(fn, np.asarray(mun), phi2, psi2, h, n, tau)
            if np.max(np.abs(Fn)) < rnorm or lam < 1e-4:
                f, mu = fn, mun
                break
            lam *= 0.5
    F = _rot_el_residual(f, np.asarray(mu), phi2, psi2, h, n, tau)
    rnorm = float(np.max(np.abs(F)))
    if rnorm < NEWTON_TARGET:
        return f, mu, rnorm, newton_max
    if best[0] < 10.0 * NEWTON_TARGET:  # stalled on the roundoff floor
        return best[1], best[2], best[0], newton_max
    return None, best[2], best[0], newton_max  # signal failure with best iterate


def _rot_wform_cg(g: RotSym, params: FlowParams, w0, max_iter, tol):
    """Projected nonlinear CG on w = exp(-f/2) over the unit-mass sphere."""
    phi2 = g.phi**2
    psi2 = g.psi**2
    h = g.grid.h
    n = g.n
    tau = params.tau
    R = rk.rot_curvature(phi2, psi2, h, n, profile="quadrature")["scal"]
    scale = (4.0 * math.pi * tau) ** (-n / 2.0)
    wq = rk.rot_volume_weights(g.phi, g.psi, h, n) * scale

    def normalize(w):
        nrm = math.sqrt(float(np.sum(wq * w * w)))
        return w / nrm

    def energy(w):
        ws = d1(w, h, EVEN, 4) / g.phi
        w2 = w * w
        logw2 = np.log(np.maximum(w2, 1e-300))
        return float(np.sum(wq * (tau * (4.0 * ws * ws + R * w2) - w2 * logw2 - n * w2)))

    def gradient(w):
        lap = rk.rot_laplacian_apply(phi2, psi2, h, n, w, profile="quadrature")
        logw2 = np.log(np.maximum(w * w, 1e-300))
        gr = -8.0 * tau * lap + 2.0 * tau * R * w - 2.0 * w * logw2 - 2.0 * w - 2.0 * n * w
        gr = gr - float(np.sum(wq * gr * w)) * w  # tangent projection
        return gr

    w = normalize(w0.copy())
    E = energy(w)
    gr = gradient(w)
    direction = -gr
    it = 0
    for it in range(max_iter):
        gnorm = math.sqrt(float(np.sum(wq * gr * gr)))
        if gnorm < tol:
            break
        if float(np.sum(wq * direction * gr)) >= 0.0:
            direction = -gr
        step = 1.0
        accepted = False
        slope = float(np.sum(wq * direction * gr))
        for _ in range(40):
            cand = normalize(w + step * direction)
            if np.any(cand <= 0.0):
                step *= 0.5
                continue
            Ec = energy(cand)
            if Ec <= E + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        w_new = normalize(w + step * direction)
        gr_new = gradient(w_new)
        beta = max(
            0.0,
            float(np.sum(wq * gr_new * (gr_new - gr)))
            / max(float(np.sum(wq * gr * gr)), 1e-300),
        )
        direction = -gr_new + beta * direction
        w, gr, E = w_new, gr_new, energy(w_new)
    if np.any(w <= 0.0):
        raise PositivityLossError("minimizer substitution touched zero", best=None)
    return w, it


def default_tolerance(g: MetricRep) -> float:
    return DEFAULT_TOL_ROTSYM if isinstance(g, RotSym) else DEFAULT_TOL_HOMOGENEOUS


def minimize_mu(g: MetricRep, params: FlowParams, opts: MinimizeOpts | None = None) -> EntropyResult:
    """Minimize W over unit-mass potentials; returns mu, the minimizer, and
    the minimizer-equation residual in L^2(dnu)."""
    opts = opts or MinimizeOpts()
    tol = opts.tol if opts.tol is not None else default_tolerance(g)
    n = g.dim
    tau = params.tau

    if isinstance(g, (ConformalSphere, BergerS3)):
        # symmetry forces a constant minimizer; the constraint determines it
        fbar = normalizing_constant(g, params)
        if isinstance(g, ConformalSphere):
            mu = mu_conformal_closed(g.n, g.c, tau)
        else:
            mu = mu_berger_closed(g.coeffs, tau)
        f = constant_scalar_field(g, fbar)
        meas = weighted_measure(g, f, params)
        R = n * (n - 1) / g.c if isinstance(g, ConformalSphere) else berger_scalar(*g.coeffs)
        residual = abs(tau * R + fbar - n - mu)
        return EntropyResult(mu, f, residual, 0, abs(meas.total_mass - 1.0))

    if not isinstance(g, RotSym):
        raise RicciLabError(f"unknown metric {g!r}")

    m = g.grid.n_nodes
    if opts.warm_start is not None:
        check_same_class(g, opts.warm_start)
        f0 = opts.warm_start.values.copy()
    else:
        f0 = np.full(m, normalizing_constant(g, params))
    f, mu, rnorm, iters = _rot_newton(g, params, f0, opts.newton_max)
    if f is None:
        # out of the warm-start basin: projected CG on w, then Newton again
        w0 = np.exp(-0.5 * f0)
        nrm = math.sqrt(
            float(
                np.sum(
                    rk.rot_volume_weights(g.phi, g.psi, g.grid.h, g.n)
                    * (4.0 * math.pi * tau) ** (-n / 2.0)
                    * w0**2
                )
            )
        )
        w, cg_iters = _rot_wform_cg(g, params, w0 / nrm, opts.max_iter, 1e-6)
        f0 = -2.0 * np.log(w)
        f, mu, rnorm, it2 = _rot_newton(g, params, f0, opts.newton_max)
        iters += cg_iters + it2
        if f is None:
            best = EntropyResult(
                mu, ScalarField(f0), rnorm, iters, float("nan")
            )
            raise SolverFailure(
                f"minimizer Newton stalled at residual {rnorm:.3e}", best=best
            )
    fsf = ScalarField(f)
    meas = weighted_measure(g, fsf, params)
    res_field = _rot_el_residual(
        f, np.asarray(mu), g.phi**2, g.psi**2, g.grid.h, n, tau
    )[:-1]
    res_l2 = math.sqrt(float(np.sum(meas.weights * res_field**2)))
    if res_l2 > tol:
        raise SolverFailure(
            f"minimizer residual {res_l2:.3e} above tolerance {tol:.1e}",
            best=EntropyResult(mu, fsf, res_l2, iters, abs(meas.total_mass - 1.0)),
        )
    return EntropyResult(mu, fsf, res_l2, iters, abs(meas.total_mass - 1.0))


# ---------------------------------------------------------------------------
# entropy gradient


def mu_directional_derivatives(g: RotSym, er: EntropyResult, params: FlowParams):
    """Exact nodal derivatives of the discrete mu(g) via the implicit
    function theorem: one adjoint solve of the Newton Jacobian plus a batched
    complex-step pass over the metric components."""
    phi2 = g.phi**2
    psi2 = g.psi**2
    h = g.grid.h
    n = g.n
    tau = params.tau
    m = g.grid.n_nodes
    f = er.minimizer.values
    mu = np.asarray(er.mu)

    J = _rot_el_jacobian(f, phi2, psi2, h, n, tau)
    e_last = np.zeros(m + 1)
    e_last[m] = 1.0
    lam = np.linalg.solve(J.T, e_last)

    eps = 1e-30
    # batch: all phi2 nodes, interior psi2 nodes (pole psi2 is structurally 0
    # and the square root is not differentiable there)
    nb = m + (m - 2)
    P2 = np.broadcast_to(phi2, (nb, m)).astype(complex).copy()
    S2 = np.broadcast_to(psi2, (nb, m)).astype(complex).copy()
    P2[np.arange(m), np.arange(m)] += 1j * eps
    S2[m + np.arange(m - 2), 1 + np.arange(m - 2)] += 1j * eps
    Fd = _rot_el_residual(f, mu, P2, S2, h, n, tau).imag / eps
    dmu = -(Fd @ lam)
    d_phi = dmu[:m].copy()
    d_psi = np.zeros(m)
    d_psi[1:-1] = dmu[m:]
    return d_phi, d_psi


def _grad_mu_rotsym_exact(g: RotSym, er: EntropyResult, params: FlowParams) -> Perturbation:
    """Riesz representation of the exact discrete mu-derivative.

    The raw nodal derivative divided by the vanishing pole weights would
    amplify stencil-support noise into spurious pole-layer spikes, so the
    functional is represented on the smooth resolvable mode band instead:
    the result reproduces d mu[h] exactly for every h in that band.
    """
    basis = smooth_perturbation_basis(g)
    d_phi, d_psi = mu_directional_derivatives(g, er, params)
    rhs = np.array(
        [
            float(np.sum(d_phi * b.comps[0]) + np.sum(d_psi * b.comps[1]))
            for b in basis
        ]
    )
    meas = weighted_measure(g, er.minimizer, params)
    wq = meas.weights
    n = g.n
    phi2 = g.phi**2
    psi2 = g.psi**2
    U = np.stack([b.comps[0] / phi2 for b in basis])
    V = np.stack(
        [rk.rot_fiber_ratio(b.comps[1], psi2, g.grid.h) for b in basis]
    )
    gram = (U * wq) @ U.T + (n - 1) * (V * wq) @ V.T
    coeffs, *_ = np.linalg.lstsq(gram, rhs, rcond=1e-13)
    gxx = coeffs @ np.stack([b.comps[0] for b in basis])
    gsph = coeffs @ np.stack([b.comps[1] for b in basis])
    return Perturbation((gxx, gsph))


def grad_mu(g: MetricRep, er: EntropyResult, params: FlowParams) -> GradMu:
    """Gradient of mu at g: -tau(Ric + Hess f - g/(2 tau)) in reduced components."""
    tau = params.tau
    # staleness guard: the minimizer must still satisfy its equation for g
    if isinstance(g, (ConformalSphere, BergerS3)):
        fbar = normalizing_constant(g, params)
        if abs(er.minimizer.const - fbar) > 1e-8:
            raise StaleInputError("minimizer does not match this metric")
        ric = ricci(g).comps[0]
        if isinstance(g, ConformalSphere):
            tensor = Perturbation((-tau * (ric - g.c / (2.0 * tau)),))
        else:
            tensor = Perturbation((-tau * (ric - g.coeffs / (2.0 * tau)),))
    elif isinstance(g, RotSym):
        res = _rot_el_residual(
            er.minimizer.values,
            np.asarray(er.mu),
            g.phi**2,
            g.psi**2,
            g.grid.h,
            g.n,
            tau,
        )
        if float(np.max(np.abs(res))) > 1e3 * NEWTON_TARGET:
            raise StaleInputError(
                f"minimizer residual {np.max(np.abs(res)):.2e} fails the recheck"
            )
        tensor = _grad_mu_rotsym_exact(g, er, params)
    else:
        raise RicciLabError(f"unknown metric {g!r}")
    nrm = l2_weighted_norm(tensor, g, er.minimizer, params)
    return GradMu(tensor, nrm)


# ---------------------------------------------------------------------------
# spectral gap


def weighted_spectral_gap(
    g0: MetricRep,
    f0: ScalarField,
    params: FlowParams,
    certificate_tol: float | None = None,
) -> float:
    """Least positive eigenvalue of -Lap^{f0} on functions at a soliton pair."""
    check_same_class(g0, f0)
    tau = params.tau
    n = g0.dim
    S = ricci(g0) + hessian(g0, f0) - metric_scale(g0, 1.0 / (2.0 * tau))
    cert = l2_weighted_norm(S, g0, f0, params)
    tol = certificate_tol
    if tol is None:
        tol = 1e-8 if not isinstance(g0, RotSym) else 100.0 * g0.grid.h**2
    if cert > tol:
        raise PreconditionError(
            f"not a soliton pair: residual {cert:.3e} exceeds {tol:.1e}"
        )
    if isinstance(g0, ConformalSphere):
        return n / g0.c
    if isinstance(g0, BergerS3):
        # soliton certificate forces the round metric; exact round spectrum
        return 3.0 / float(np.mean(g0.coeffs))
    K, M = rk.rot_dirichlet_matrices(
        g0.phi, g0.psi, g0.grid.h, g0.n, np.exp(-f0.values)
    )
    vals = scipy.linalg.eigh(K, M, eigvals_only=True)
    vals = np.sort(vals)
    positive = vals[vals > max(1e-10, 1e-6 * abs(vals[-1]))]
    if positive.size == 0:
        raise PreconditionError("no positive eigenvalue found")
    return float(positive[0])


def metric_scale(g: MetricRep, factor: float) -> Perturbation:
    """factor * g as a Perturbation (helper for soliton residuals)."""
    return metric_as_perturbation(g) * factor


def soliton_residual(g: MetricRep, f: ScalarField, params: FlowParams) -> Perturbation:
    """Ric + Hess f - g/(2 tau) in reduced components."""
    return ricci(g) + hessian(g, f) - metric_scale(g, 1.0 / (2.0 * params.tau))
