"""Second variation of the entropy at a shrinking soliton, gauge fixing, and
the chart that turns metrics near the soliton into divergence-free tensors.

The second-variation operator is assembled termwise as the exact
linearization of the entropy gradient -tau(Ric + Hess P(g) - g/(2 tau)):

    L h = -tau( Ric'(h) + Hess(Phi(h) + tr h / 2) + Psi(h) - h/(2 tau) )

with Phi(h) the unique solution of (Lap^{f0} + 1/(2 tau)) Phi = -1/2 d^f d^f h
and Psi(h) the Christoffel-variation term contracted with grad f0.  Ric'(h)
is the exact derivative of the class's Ricci map (closed form on the
homogeneous classes, complex-step of the discrete kernel on RotSym), so the
operator is validated against finite-difference Hessians of mu rather than
against an independently discretized Lichnerowicz Laplacian.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import rotkernels as rk
from .diffeos import RadialDiffeo, flow_static, pullback_metric
from .entropy import (
    EntropyResult,
    MinimizeOpts,
    grad_mu,
    minimize_mu,
    soliton_residual,
)
from .errors import (
    BasinExceededError,
    GaugeDegenerateError,
    PreconditionError,
    ResonanceError,
)
from .geometry import (
    berger_ricci_jacobian,
    hessian,
    holder_proxy_norm,
    l2_weighted_inner,
    l2_weighted_norm,
    lie_derivative,
    pointwise_inner,
    weighted_divergence,
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
    VectorFieldRep,
    check_same_class,
    class_name,
    constant_scalar_field,
    metric_as_perturbation,
    metric_components,
    metric_plus,
    smooth_perturbation_basis,
    zero_perturbation,
)
from .params import FlowParams


@dataclass(frozen=True)
class SolitonRef:
    """Certified soliton base point (g0, f0) with its residual certificate."""

    metric: MetricRep
    potential: ScalarField
    params: FlowParams
    certificate: float
    entropy: EntropyResult

    @property
    def mu(self):
        return self.entropy.mu


def make_soliton_ref(
    g0: MetricRep,
    params: FlowParams,
    certificate_tol: float | None = None,
    polish: bool = True,
) -> SolitonRef:
    """Certify (g0, P(g0)) as a soliton pair.

    Homogeneous solitons are exact and held to 1e-8.  On RotSym grids the
    continuum profile solves the discrete soliton equation only to O(h^2);
    ``polish`` runs a Newton iteration on the entropy gradient within the
    divergence-free slice, which drives the slice components of grad mu to
    roundoff and leaves a certificate at the pure-gauge discretization level.
    The default tolerance scales with the grid accordingly.
    """
    er = minimize_mu(g0, params)
    if isinstance(g0, RotSym) and polish:
        g0, er = _polish_rotsym_soliton(g0, er, params)
    cert = certified_gradient_norm(g0, er, params)
    if certificate_tol is None:
        certificate_tol = (
            100.0 * g0.grid.h**2 if isinstance(g0, RotSym) else 1e-8
        )
    if cert > certificate_tol:
        raise PreconditionError(
            f"soliton certificate {cert:.3e} exceeds tolerance {certificate_tol:.1e}"
        )
    return SolitonRef(g0, er.minimizer, params, cert, er)


def certified_gradient_norm(g0, er, params) -> float:
    """|grad mu| in L^2(dnu): the operational soliton certificate."""
    return grad_mu(g0, er, params).l2_dnu_norm


def _band_newton_step(g, er, params, basis, cutoff):
    """One Newton step on the band-projected entropy gradient.

    Directions with Hessian eigenvalues below ``cutoff`` (the flat gauge
    modes) are left untouched.
    """
    ref = SolitonRef(g, er.minimizer, params, 0.0, er)
    gm = grad_mu(g, er, params)
    meas = weighted_measure(g, er.minimizer, params)
    grad_c = np.array(
        [meas.integrate(pointwise_inner(g, gm.tensor, b)) for b in basis]
    )
    dim = len(basis)
    H = np.zeros((dim, dim))
    G = np.zeros((dim, dim))
    for j, b in enumerate(basis):
        Lb = second_variation_apply(ref, b)
        for i, bi in enumerate(basis):
            H[i, j] = meas.integrate(pointwise_inner(g, Lb, bi))
            if i >= j:
                G[i, j] = G[j, i] = l2_weighted_inner(
                    bi, b, g, er.minimizer, params
                )
    H = 0.5 * (H + H.T)
    vals, vecs = scipy.linalg.eigh(H, G)
    y = vecs.T @ grad_c
    with np.errstate(divide="ignore"):
        step_y = np.where(np.abs(vals) > cutoff, -y / vals, 0.0)
    coef = vecs @ step_y
    step = zero_perturbation(g)
    for cj, b in zip(coef, basis):
        step = step + b * cj
    g = metric_plus(g, step)
    er = minimize_mu(g, params, MinimizeOpts(warm_start=er.minimizer))
    return g, er, float(np.linalg.norm(grad_c))


def _polish_rotsym_soliton(g0: RotSym, er: EntropyResult, params: FlowParams):
    """Newton toward the discrete critical point of mu.

    One full-band step clears the well-conditioned directions, then the
    divergence-free slice (where the Hessian is uniformly nondegenerate) is
    converged; the certificate floor is set by the flat gauge modes.
    """
    g = g0
    band = smooth_perturbation_basis(g)
    g, er, _ = _band_newton_step(g, er, params, band, cutoff=3e-3)
    for _ in range(5):
        ref = SolitonRef(g, er.minimizer, params, 0.0, er)
        slice_basis = divergence_free_projection(ref)
        g, er, gnorm = _band_newton_step(
            g, er, params, slice_basis, cutoff=1e-6
        )
        if gnorm < 1e-11:
            break
    return g, er


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    gauge: str  # "DivergenceFree" or "None"
    subspace: str
    size: int
    fd_hessian_agreement: float


@dataclass(frozen=True)
class GaugeFixResult:
    diffeo: object  # RadialDiffeo on RotSym, None on homogeneous classes
    fixed_h: Perturbation
    residual: float
    killing_component_norm: float
    amplification: float


# ---------------------------------------------------------------------------
# scalar solve for the potential linearization


def _phi_operator_matrix(s: SolitonRef):
    g0 = s.metric
    if not isinstance(g0, RotSym):
        raise PreconditionError("scalar solve is only nontrivial on RotSym")
    phi2 = g0.phi**2
    psi2 = g0.psi**2
    h = g0.grid.h
    m = g0.grid.n_nodes
    f0 = s.potential.values
    A = rk.rot_laplacian_matrix(phi2, psi2, h, g0.n, fpot=f0, profile="quadrature")
    return A + np.eye(m) / (2.0 * s.params.tau)


def solve_phi(s: SolitonRef, h: Perturbation) -> ScalarField:
    """Unique solution of (Lap^{f0} + 1/(2 tau)) Phi = -1/2 d^f0 d^f0 h."""
    g0 = s.metric
    check_same_class(g0, h)
    if isinstance(g0, (ConformalSphere, BergerS3)):
        # every reduced tensor is divergence free there, so Phi vanishes
        return constant_scalar_field(g0, 0.0)
    from .geometry import double_weighted_divergence

    rhs = -0.5 * double_weighted_divergence(g0, s.potential, h).values
    A = _phi_operator_matrix(s)
    # resonance guard: the shift must stay away from spec(-Lap^{f0})
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-8:
        raise ResonanceError(
            f"scalar operator nearly singular (smallest singular value {sv[-1]:.2e})"
        )
    phi = np.linalg.solve(A, rhs)
    return ScalarField(phi)


def psi_term(s: SolitonRef, h: Perturbation) -> Perturbation:
    """First-order term -(1/2) g^{kl}(∂_i h_jl + ∂_j h_il - ∂_l h_ij) ∂_k f0.

    Vanishes when f0 is constant; in the radial reduction:
      Psi_xx  = -1/2 a_s f0_s * phi^2   (a = h_xx / phi^2)
      Psi_sph = -1/2 f0_s (2 psi psi_s a - b_s)   (b = fiber coefficient)
    """
    g0 = s.metric
    check_same_class(g0, h)
    if isinstance(g0, (ConformalSphere, BergerS3)):
        return zero_perturbation(g0)
    grid = g0.grid
    phi2 = g0.phi**2
    b = rk.rot_basics(phi2, g0.psi**2, grid.h, profile="quadrature")
    f_s = d1(s.potential.values, grid.h, EVEN, 4) / g0.phi
    a = h.comps[0] / phi2
    a_s = d1(a, grid.h, EVEN, 4) / g0.phi
    b_s = d1(h.comps[1], grid.h, EVEN, 4) / g0.phi
    pxx = -0.5 * a_s * f_s * phi2
    psph = -0.5 * f_s * (2.0 * b["psi"] * b["psi_s"] * a - b_s)
    psph = psph.copy()
    psph[0] = 0.0
    psph[-1] = 0.0
    return Perturbation((pxx, psph))


# ---------------------------------------------------------------------------
# Ricci linearization per class


def ricci_prime(g0: MetricRep, h: Perturbation) -> Perturbation:
    """Exact directional derivative of the Ricci map at g0."""
    check_same_class(g0, h)
    if isinstance(g0, ConformalSphere):
        return zero_perturbation(g0)  # Ricci is scale invariant on the family
    if isinstance(g0, BergerS3):
        J = berger_ricci_jacobian(*g0.coeffs)
        return Perturbation((J @ h.comps[0],))
    phi2 = g0.phi**2
    psi2 = g0.psi**2
    eps = 1e-30
    # quadrature stencil profile: the operator is validated against Hessians
    # of the discrete mu, which is built at that order
    cur = rk.rot_curvature(
        phi2 + 1j * eps * h.comps[0],
        psi2 + 1j * eps * h.comps[1],
        g0.grid.h,
        g0.n,
        profile="quadrature",
    )
    return Perturbation((cur["ric_xx"].imag / eps, cur["ric_sph"].imag / eps))


def trace(g0: MetricRep, h: Perturbation) -> np.ndarray:
    if isinstance(g0, ConformalSphere):
        return np.asarray(g0.n * h.comps[0][0] / g0.c)
    if isinstance(g0, BergerS3):
        return np.asarray(float(np.sum(h.comps[0] / g0.coeffs)))
    q = rk.rot_fiber_ratio(h.comps[1], g0.psi**2, g0.grid.h)
    return h.comps[0] / g0.phi**2 + (g0.n - 1) * q


def second_variation_apply(s: SolitonRef, h: Perturbation) -> Perturbation:
    """L h, the second variation of mu at the soliton, term by term."""
    g0 = s.metric
    check_same_class(g0, h)
    tau = s.params.tau
    rp = ricci_prime(g0, h)
    tr_half = trace(g0, h) * 0.5
    if isinstance(g0, (ConformalSphere, BergerS3)):
        # constant scalar contributions have vanishing Hessian
        hess_part = zero_perturbation(g0)
        psi_part = zero_perturbation(g0)
    else:
        phi_h = solve_phi(s, h)
        pfield = phi_h.values + np.asarray(tr_half)
        hxx, hs = rk.rot_hessian(
            g0.phi**2, g0.psi**2, g0.grid.h, pfield, profile="quadrature"
        )
        hess_part = Perturbation((hxx, hs))
        psi_part = psi_term(s, h)
    return (rp + hess_part + psi_part - h * (1.0 / (2.0 * tau))) * (-tau)


# ---------------------------------------------------------------------------
# gauge subspace and spectra


def perturbation_basis(g0: MetricRep):
    """Mode basis of the reduced perturbation space (resolvable band)."""
    return smooth_perturbation_basis(g0)


def _psi_s_zero_crossings(g0: RotSym):
    """Interior zeros of psi_s (equator circles), located by local cubic fit."""
    from scipy.interpolate import CubicSpline

    b = rk.rot_basics(g0.phi**2, g0.psi**2, g0.grid.h)
    psi_s = b["psi_s"]
    x = g0.grid.x
    spl = CubicSpline(x, psi_s)
    roots = [
        float(r)
        for r in np.atleast_1d(spl.roots(extrapolate=False))
        if 0.05 * g0.grid.length < r < 0.95 * g0.grid.length
    ]
    return roots, psi_s


def divergence_free_completion(s: SolitonRef, a):
    """The tensor (phi^2 a, psi^2 q) with delta^{f0} h = 0 solved for q.

    The divergence stencil is inverted pointwise: q = a + (a_s - f_s a) *
    psi / ((n-1) psi_s), with the same first-derivative stencil as the
    divergence operator, so the cancellation is exact at every node.  The
    caller guarantees a_s - f_s a vanishes at the psi_s zero crossings, which
    makes the quotient smooth through the equator.
    """
    g0 = s.metric
    grid = g0.grid
    phi2 = g0.phi**2
    b = rk.rot_basics(phi2, g0.psi**2, grid.h)
    f_s = d1(s.potential.values, grid.h, EVEN, 2) / g0.phi
    a_s = d1(a, grid.h, EVEN, 2) / g0.phi
    w = a_s - f_s * a
    psi_s = b["psi_s"]
    # T = w psi / ((n-1) psi_s): the caller aligned w's zero with psi_s's in
    # the spline sense, and nodal values interpolate the splines, so the
    # quotient passes smoothly through each crossing; only an exact-zero
    # denominator needs a guard
    T = np.zeros_like(a)
    good = np.abs(psi_s) > 1e-13
    T[good] = w[good] * b["psi"][good] / ((g0.n - 1) * psi_s[good])
    if np.any(~good):
        idx = np.where(~good)[0]
        for j in idx:
            if 0 < j < len(a) - 1:
                T[j] = 0.5 * (T[j - 1] + T[j + 1])
    q = a + T
    q[0] = a[0]
    q[-1] = a[-1]
    return Perturbation((phi2 * a, g0.psi**2 * q))


def _equator_constrained_a_modes(s: SolitonRef, kmax=None):
    """Band functions a with a_s - f_s a = 0 at the psi_s zero crossings.

    The point constraints are necessary for any bounded divergence-free
    completion; one cosine-mode combination is lost per equator circle.
    """
    from scipy.interpolate import CubicSpline

    g0 = s.metric
    grid = g0.grid
    m = grid.n_nodes
    if kmax is None:
        # stay well inside the band the 4th-order stencils resolve at the
        # 1e-3 level the operator checks run at
        kmax = min(max(6, m // 12), 20)
    x = grid.x
    L = grid.length
    modes = np.stack([np.cos(k * math.pi * x / L) for k in range(kmax)])
    f_s = d1(s.potential.values, grid.h, EVEN, 2) / g0.phi
    roots, _ = _psi_s_zero_crossings(g0)
    if not roots:
        return [modes[k] for k in range(kmax)]
    # constraint rows from the discrete stencil w of each mode, splined to
    # the crossing, so the w-zeros align with the psi_s zero in the same
    # discrete sense the completion formula divides in
    w_nodal = np.stack(
        [d1(mo, grid.h, EVEN, 2) / g0.phi - f_s * mo for mo in modes]
    )
    rows = [
        np.array([float(CubicSpline(x, wk)(r)) for wk in w_nodal]) for r in roots
    ]
    C = np.stack(rows)
    U, sv, Vt = np.linalg.svd(C, full_matrices=True)
    rank = int(np.sum(sv > max(sv[0] * 1e-12, 1e-300))) if sv.size else 0
    null = Vt[rank:]
    return [null[j] @ modes for j in range(null.shape[0])]


def divergence_free_projection(s: SolitonRef, basis=None, kmax=None):
    """dnu-orthonormal basis of the divergence-free gauge subspace.

    Homogeneous classes are identically divergence free.  On RotSym grids the
    subspace is built by explicit completion over the resolvable band; every
    element satisfies the nodal divergence equation to roundoff.
    """
    g0 = s.metric
    params = s.params
    f0 = s.potential
    if isinstance(g0, (ConformalSphere, BergerS3)):
        return basis if basis is not None else perturbation_basis(g0)
    combos = [
        divergence_free_completion(s, a)
        for a in _equator_constrained_a_modes(s, kmax=kmax)
    ]
    if not combos:
        raise GaugeDegenerateError("divergence-free completion produced no modes")
    out = []
    for p in combos:
        for q in out:
            p = p - q * l2_weighted_inner(p, q, g0, f0, params)
        nrm = l2_weighted_norm(p, g0, f0, params)
        if nrm > 1e-8:
            out.append(p * (1.0 / nrm))
    if not out:
        raise GaugeDegenerateError("divergence-free projection is rank deficient")
    return out


def _fd_hessian_of_mu(s: SolitonRef, direction: Perturbation, eps=1e-4):
    """Second central difference of mu along g0 + t * direction."""
    g0 = s.metric
    opts = MinimizeOpts(warm_start=s.potential if isinstance(g0, RotSym) else None)
    mu_p = minimize_mu(metric_plus(g0, direction, eps), s.params, opts).mu
    mu_m = minimize_mu(metric_plus(g0, direction, -eps), s.params, opts).mu
    return (mu_p - 2.0 * s.entropy.mu + mu_m) / (eps * eps)


def spectrum(
    s: SolitonRef,
    gauge: str = "DivergenceFree",
    n_fd_checks: int = 10,
    seed: int = 0,
) -> SpectrumReport:
    """Eigenvalues of L on the (projected) reduced subspace, dnu inner product."""
    g0 = s.metric
    params = s.params
    f0 = s.potential
    basis = perturbation_basis(g0)
    if gauge == "DivergenceFree":
        basis = divergence_free_projection(s, basis)
    elif gauge != "None":
        raise ValueError(f"unknown gauge {gauge!r}")
    dim = len(basis)
    A = np.zeros((dim, dim))
    G = np.zeros((dim, dim))
    images = [second_variation_apply(s, b) for b in basis]
    for i in range(dim):
        for j in range(dim):
            A[i, j] = l2_weighted_inner(images[j], basis[i], g0, f0, params)
            G[i, j] = l2_weighted_inner(basis[i], basis[j], g0, f0, params)
    A = 0.5 * (A + A.T)
    vals, vecs = scipy.linalg.eigh(A, G)
    # FD-Hessian validation along random gauge-subspace directions
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fd_checks):
        cof = rng.normal(size=dim)
        p = zero_perturbation(g0)
        for cj, b in zip(cof, basis):
            p = p + b * cj
        nrm = l2_weighted_norm(p, g0, f0, params)
        p = p * (1.0 / nrm)
        quad = float(cof @ A @ cof / (cof @ G @ cof))
        fd = _fd_hessian_of_mu(s, p)
        denom = max(abs(fd), abs(quad), 1e-8)
        worst = max(worst, abs(fd - quad) / denom)
    return SpectrumReport(
        eigenvalues=np.sort(vals),
        gauge=gauge,
        subspace=f"{class_name(g0)} reduced perturbations, dim {dim}",
        size=dim,
        fd_hessian_agreement=worst,
    )


# ---------------------------------------------------------------------------
# Killing projection and gauge fixing


def killing_projection(s: SolitonRef, X: VectorFieldRep) -> VectorFieldRep:
    """dnu-orthogonal projection onto the reduced Killing space.

    Round Berger metrics carry the full left-invariant algebra; the reduced
    RotSym and conformal classes have no radial Killing fields.
    """
    g0 = s.metric
    check_same_class(g0, X)
    if isinstance(g0, BergerS3):
        a, b, c = g0.coeffs
        mask = np.array(
            [1.0 if abs(b - c) < 1e-12 else 0.0,
             1.0 if abs(a - c) < 1e-12 else 0.0,
             1.0 if abs(a - b) < 1e-12 else 0.0]
        )
        return VectorFieldRep(X.comps * mask)
    return VectorFieldRep(np.zeros_like(X.comps))


def _rot_gauge_residual(s: SolitonRef, g_tilde: RotSym, u):
    """delta^{f0}(phi_{u,1}^* g~ - g0) as a nodal radial 1-form."""
    g0 = s.metric
    rho = flow_static(g0.grid, u, 1.0, substeps=16)
    pulled = pullback_metric(g_tilde, rho)
    diff = Perturbation(
        tuple(
            b - a
            for a, b in zip(metric_components(g0), metric_components(pulled))
        )
    )
    out = weighted_divergence(g0, s.potential, diff).comps
    return out, pulled, diff, rho


def _rot_gauge_jacobian(s: SolitonRef):
    """Linearization u -> delta^{f0} L_{u} g0 as a dense interior matrix."""
    g0 = s.metric
    m = g0.grid.n_nodes
    phi2 = g0.phi**2
    psi2 = g0.psi**2
    h = g0.grid.h
    f0 = s.potential.values

    def apply_lin(u):
        lxx, ls = rk.rot_lie_derivative(phi2, psi2, h, u)
        return rk.rot_divergence(phi2, psi2, h, g0.n, lxx, ls, fpot=f0)

    return rk.operator_matrix(apply_lin, m)


def gauge_fix(
    s: SolitonRef,
    g_tilde: MetricRep,
    tol: float = 1e-8,
    max_iter: int = 40,
) -> GaugeFixResult:
    """Newton iteration for the diffeomorphism with delta^{f0}(phi* g~ - g0) = 0.

    The update solves the linearization at the identity (delta^{f0} L_u g0,
    a chord Newton), the candidate map is the time-1 flow of u, and the
    Killing component is projected away (trivially zero in the reduced
    classes; the round Berger algebra acts trivially on diagonal metrics).
    """
    g0 = s.metric
    check_same_class(g0, g_tilde)
    params = s.params
    f0 = s.potential
    if isinstance(g0, (ConformalSphere, BergerS3)):
        fixed = Perturbation(
            tuple(
                b - a
                for a, b in zip(metric_components(g0), metric_components(g_tilde))
            )
        )
        size = l2_weighted_norm(fixed, g0, f0, params)
        amp = 1.0 if size == 0.0 else 1.0
        return GaugeFixResult(None, fixed, 0.0, 0.0, amp)

    m = g0.grid.n_nodes
    J = _rot_gauge_jacobian(s)
    # interior unknowns; u vanishes at the poles
    Ji = J[1:-1, 1:-1]
    u = np.zeros(m)
    meas = weighted_measure(g0, f0, params)

    def resid_norm(r):
        return math.sqrt(float(np.sum(meas.weights * r * r)))

    best = None
    for it in range(max_iter):
        r, pulled, diff, rho = _rot_gauge_residual(s, g_tilde, u)
        rn = resid_norm(r)
        if best is None or rn < best[0]:
            best = (rn, u.copy(), pulled, diff, rho)
        if rn <= tol:
            break
        try:
            du = np.linalg.solve(Ji, r[1:-1])
        except np.linalg.LinAlgError as exc:
            raise GaugeDegenerateError(f"gauge linearization singular: {exc}") from exc
        step = np.zeros(m)
        step[1:-1] = -du
        # damped update with basin guard
        lam = 1.0
        improved = False
        for _ in range(20):
            cand = u + lam * step
            rc, *_ = _rot_gauge_residual(s, g_tilde, cand)
            if resid_norm(rc) < rn:
                u = cand
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    rn, u, pulled, diff, rho = best
    if rn > tol:
        raise BasinExceededError(
            f"gauge Newton stalled at residual {rn:.3e}", best=None
        )
    raw = Perturbation(
        tuple(
            b - a
            for a, b in zip(metric_components(g0), metric_components(g_tilde))
        )
    )
    denom = holder_proxy_norm(raw, g0, params)
    num = holder_proxy_norm(diff, g0, params)
    amp = 1.0 if denom == 0.0 else num / denom
    return GaugeFixResult(rho, diff, rn, 0.0, amp)


# ---------------------------------------------------------------------------
# chart and reduced functional


def chart_E(s: SolitonRef, h: Perturbation, div_free_tol: float = 1e-6) -> MetricRep:
    """g0 + h for divergence-free h: the slice chart acts as inclusion."""
    g0 = s.metric
    check_same_class(g0, h)
    dv = weighted_divergence(g0, s.potential, h)
    if isinstance(g0, RotSym):
        meas = weighted_measure(g0, s.potential, s.params)
        size = math.sqrt(float(np.sum(meas.weights * dv.comps**2)))
    else:
        size = float(np.max(np.abs(dv.comps)))
    if size > div_free_tol:
        raise PreconditionError(
            f"chart direction is not divergence free (|delta h| = {size:.2e})"
        )
    return metric_plus(g0, h)


def chart_E_inv(s: SolitonRef, g: MetricRep) -> Perturbation:
    """Gauge-fix then subtract the base point."""
    return gauge_fix(s, g).fixed_h


def g_functional(s: SolitonRef, h: Perturbation) -> float:
    """mu composed with the chart: the reduced functional on the slice."""
    g = chart_E(s, h)
    warm = s.potential if isinstance(s.metric, RotSym) else None
    return minimize_mu(g, s.params, MinimizeOpts(warm_start=warm)).mu
