"""Time integrators for the normalized flow, its gauge variants, the coupled
system, and the entropy-ascent (modified) flow.

Homogeneous classes reduce to small ODE systems integrated with adaptive
embedded Runge-Kutta; RotSym profiles use a semi-implicit predictor-corrector
(Crank-Nicolson on the fiber diffusion, explicit elsewhere) with dt tied to
the grid.  Modified-flow steps are accepted only when the discrete increment
matches the monotonicity identity d mu/dt = 2 tau |Ric + Hess f - g/(2 tau)|^2
within tolerance; the RotSym modified flow steps along the exact gradient of
the discrete entropy so the identity is a property of the scheme rather than
an approximation target.

The coupled potential equation is backward parabolic, so on RotSym grids
run_coupled realizes the equivalent construction: normalized flow forward,
conjugate potential backward from the terminal minimizer, then transport by
the accumulated minimizer-gradient flow (both monotonicity integrand signs
are evaluated and the matching one is reported).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.integrate

from . import rotkernels as rk
from .diffeos import RadialDiffeo, flow_along_path, pullback_metric, pullback_scalar
from .entropy import (
    EntropyResult,
    MinimizeOpts,
    grad_mu,
    minimize_mu,
    normalizing_constant,
    soliton_residual,
    w_functional,
)
from .errors import (
    DegenerateProfileError,
    InvalidMetricError,
    PreconditionError,
    RegularityLostError,
    RicciLabError,
    SingularityDetected,
    SolverFailure,
    StiffnessFailure,
)
from .geometry import (
    berger_ricci_coeffs,
    berger_scalar,
    holder_proxy_norm,
    l2_weighted_inner,
    l2_weighted_norm,
    pointwise_inner,
    ricci,
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
    metric_as_perturbation,
    metric_components,
    metric_from_components,
    zero_perturbation,
)
from .params import FlowParams

NORMALIZED = "Normalized"
DETURCK = "DeTurck"
COUPLED = "Coupled"
MODIFIED = "Modified"
MODIFIED_PROJECTED = "ModifiedScaleProjected"

MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class FlowState:
    t: float
    metric: MetricRep
    entropy: EntropyResult | None
    grad_norm: float
    diffeo_log: RadialDiffeo | None = None
    aux: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    mu_increment: float
    identity_residual: float
    flags: tuple = ()


@dataclass
class Trajectory:
    kind: str
    states: list
    step_log: list
    notes: dict = field(default_factory=dict)

    def times(self):
        return np.array([s.t for s in self.states])

    def mus(self):
        return np.array(
            [s.entropy.mu if s.entropy is not None else np.nan for s in self.states]
        )

    def final(self) -> FlowState:
        return self.states[-1]

    def validate(self):
        ts = self.times()
        if np.any(np.diff(ts) <= 0):
            raise RicciLabError("trajectory times are not strictly increasing")
        if self.kind in (MODIFIED, MODIFIED_PROJECTED):
            mus = self.mus()
            if np.any(np.diff(mus) < -MONOTONE_SLACK):
                raise RicciLabError("entropy decreased along a modified trajectory")
        return self


@dataclass(frozen=True)
class StepperOpts:
    rtol: float = 1e-10
    atol: float = 1e-12
    dt_init: float = 1e-3
    dt_max: float = 0.25
    dt_min: float = 1e-10
    grid_dt_factor: float = 0.5  # RotSym: dt = factor * h
    identity_rel_tol: float | None = None  # default per class
    max_steps: int = 200_000
    track_entropy: bool = True
    refresh_every: int = 50
    c_window: tuple | None = None
    stop_on_window_exit: bool = True
    uniqueness_checks: int = 0
    seed: int = 0
    substeps: int = 8


def _identity_tol(g, opts):
    if opts.identity_rel_tol is not None:
        return opts.identity_rel_tol
    return 1e-2 if isinstance(g, RotSym) else 1e-4


# ---------------------------------------------------------------------------
# right-hand sides in metric components


def normalized_field(g: MetricRep, params: FlowParams):
    """-2(Ric - g/(2 tau)) in component layout."""
    tau = params.tau
    ric = ricci(g)
    comps = metric_components(g)
    return tuple(-2.0 * (r - c / (2.0 * tau)) for r, c in zip(ric.comps, comps))


def modified_field(g: MetricRep, er: EntropyResult, params: FlowParams):
    """(2/tau) grad mu = -2(Ric + Hess f - g/(2 tau)); exact-gradient form."""
    gm = grad_mu(g, er, params)
    return tuple((2.0 / params.tau) * c for c in gm.tensor.comps), gm


def scale_projected(field_comps, g, er, params):
    """Remove the dnu-orthogonal projection onto the scale direction g."""
    v = Perturbation(field_comps)
    gdir = metric_as_perturbation(g)
    num = l2_weighted_inner(v, gdir, g, er.minimizer, params)
    den = l2_weighted_inner(gdir, gdir, g, er.minimizer, params)
    coeff = num / den
    out = v - gdir * coeff
    return out.comps, abs(coeff) * math.sqrt(den)


def deturck_vector_field(g: RotSym, g_ref: RotSym):
    """Radial component (arclength) of the gauge vector field trace_g(Gamma - Gamma_ref)."""
    h = g.grid.h
    phi, psi = g.phi, g.psi
    phir, psir = g_ref.phi, g_ref.psi
    dlphi = d1(np.log(phi), h, EVEN, 2)
    dlphir = d1(np.log(phir), h, EVEN, 2)
    dpsi = d1(psi, h, -1, 2)
    dpsir = d1(psir, h, -1, 2)
    n = g.n
    num = psi * dpsi / phi**2 - psir * dpsir / phir**2
    wx = np.zeros_like(phi)
    inner = slice(1, -1)
    wx[inner] = (dlphi[inner] - dlphir[inner]) / phi[inner] ** 2 - (n - 1) * num[
        inner
    ] / (psi[inner] ** 2 * 1.0)
    # poles: smooth closure makes the combination vanish (odd field)
    return wx * phi  # arclength component u = phi * W^x


# ---------------------------------------------------------------------------
# homogeneous stepping


def _entropy_state(g, params, warm=None):
    opts = MinimizeOpts(warm_start=warm)
    return minimize_mu(g, params, opts)


def _homog_rhs(kind, params, project):
    tau = params.tau

    def rhs(y, g_like):
        g = metric_from_components(g_like, (y,))
        er = _entropy_state(g, params)
        if kind in (MODIFIED, MODIFIED_PROJECTED):
            comps, gm = modified_field(g, er, params)
            if kind == MODIFIED_PROJECTED:
                comps, _ = scale_projected(comps, g, er, params)
            return np.asarray(comps[0], dtype=float)
        comps = normalized_field(g, params)
        return np.asarray(comps[0], dtype=float)

    return rhs


def _integrate_homogeneous(kind, g0, params, t_max, opts):
    y = np.atleast_1d(metric_components(g0)[0]).astype(float)
    t = 0.0
    tau = params.tau
    rhs = _homog_rhs(kind, params, None)
    traj = Trajectory(kind, [], [], {})

    def record(t, y, dt=0.0, dmu=0.0, ident=float("nan"), flags=()):
        g = metric_from_components(g0, (y,))
        er = _entropy_state(g, params)
        gm = grad_mu(g, er, params)
        traj.states.append(FlowState(t, g, er, gm.l2_dnu_norm))
        if dt > 0.0:
            traj.step_log.append(StepRecord(t, dt, dmu, ident, flags))
        return er

    er = record(0.0, y)
    if t_max <= 0.0:
        return traj
    ident_tol = _identity_tol(g0, opts)
    fun = lambda _t, yy: rhs(yy, g0)
    dt_cap = opts.dt_max
    steps = 0
    while t < t_max - 1e-14 and steps < opts.max_steps:
        steps += 1
        solver = scipy.integrate.RK45(
            fun,
            t,
            y,
            t_bound=t_max,
            max_step=dt_cap,
            rtol=opts.rtol,
            atol=opts.atol,
        )
        try:
            solver.step()
        except Exception as exc:  # positivity loss inside RHS evaluations
            raise SingularityDetected(str(exc), trajectory=traj) from exc
        t_new, y_new = solver.t, solver.y
        dt = t_new - t
        if dt < opts.dt_min:
            raise StiffnessFailure("step size underflow", trajectory=traj)
        if np.any(y_new <= 0.0):
            raise SingularityDetected(
                "metric coefficient reached the positivity floor", trajectory=traj
            )
        flags = []
        if kind in (MODIFIED, MODIFIED_PROJECTED):
            g_new = metric_from_components(g0, (y_new,))
            er_new = _entropy_state(g_new, params)
            dmu = er_new.mu - er.mu
            i0 = (2.0 / tau) * _grad_norm_sq(traj.states[-1].metric, er, params, kind)
            i1 = (2.0 / tau) * _grad_norm_sq(g_new, er_new, params, kind)
            # relative with an absolute floor: at a fixed point both sides
            # vanish and the identity holds vacuously
            ident = abs(dmu / dt - 0.5 * (i0 + i1)) / max(abs(0.5 * (i0 + i1)), 1e-10)
            if (ident > ident_tol or dmu < -MONOTONE_SLACK) and dt > 4 * opts.dt_min:
                dt_cap = dt / 2.0
                continue
            dt_cap = min(opts.dt_max, dt * 2.0)
            t, y = t_new, y_new
            er = record(t, y, dt, dmu, ident, tuple(flags))
        else:
            dmu_prev = er.mu
            t, y = t_new, y_new
            er = record(t, y, dt, 0.0)
            traj.step_log[-1] = replace(
                traj.step_log[-1], mu_increment=er.mu - dmu_prev
            )
        if opts.c_window is not None and isinstance(g0, ConformalSphere):
            c = float(y[0])
            lo, hi = opts.c_window
            if not lo <= c <= hi:
                traj.notes["window_exit_t"] = t
                traj.notes["window_exit_c"] = c
                if opts.stop_on_window_exit:
                    break
    return traj.validate()


def _grad_norm_sq(g, er, params, kind):
    gm = grad_mu(g, er, params)
    if kind == MODIFIED_PROJECTED:
        comps, _ = scale_projected(gm.tensor.comps, g, er, params)
        p = Perturbation(comps)
        return l2_weighted_inner(p, p, g, er.minimizer, params)
    return gm.l2_dnu_norm**2


# ---------------------------------------------------------------------------
# RotSym stepping (semi-implicit predictor-corrector)


def _fiber_diffusion_matrix(g: RotSym):
    """Linear operator u -> u_ss on the fiber component (even fields).

    The stiff core of the fiber equation; pole rows are zeroed so the pinned
    boundary values never move.
    """
    from .grid import d2 as _d2

    m = g.grid.n_nodes
    phi2 = g.phi**2
    A = rk.operator_matrix(lambda u: _d2(u, g.grid.h, EVEN, 2) / phi2, m)
    A[0, :] = 0.0
    A[-1, :] = 0.0
    return A


def _integrate_rotsym(kind, g0, params, t_max, opts, field_fn, extra_record=None):
    """Theta-scheme predictor-corrector with the fiber diffusion implicit."""
    g = g0
    t = 0.0
    tau = params.tau
    traj = Trajectory(kind, [], [], {})
    warm = None
    er = _entropy_state(g, params, warm)
    gm = grad_mu(g, er, params)
    traj.states.append(FlowState(0.0, g, er, gm.l2_dnu_norm))
    if t_max <= 0.0:
        return traj
    ident_tol = _identity_tol(g0, opts)
    h = g0.grid.h
    dt = opts.grid_dt_factor * h
    m = g0.grid.n_nodes
    accepted = 0
    steps = 0
    while t < t_max - 1e-12 and steps < opts.max_steps:
        steps += 1
        dt = min(dt, t_max - t)
        A = _fiber_diffusion_matrix(g)
        lhs = np.eye(m) - 0.5 * dt * A
        comps = metric_components(g)
        try:
            F0 = field_fn(g, er)
            # predictor (implicit fiber diffusion, explicit remainder)
            n_psi0 = F0[1] - A @ comps[1]
            dpsi = np.linalg.solve(lhs, dt * (A @ comps[1] + n_psi0))
            gp = metric_from_components(
                g, (comps[0] + dt * F0[0], comps[1] + dpsi)
            )
            erp = _entropy_state(gp, params, er.minimizer)
            Fp = field_fn(gp, erp)
            # corrector: trapezoid on the explicit part, CN on the diffusion
            n_psi1 = Fp[1] - A @ metric_components(gp)[1]
            rhs = dt * (
                A @ comps[1] + 0.5 * (n_psi0 + n_psi1)
            )
            dpsi = np.linalg.solve(lhs, rhs)
            g_new = metric_from_components(
                g,
                (comps[0] + 0.5 * dt * (F0[0] + Fp[0]), comps[1] + dpsi),
            )
        except (DegenerateProfileError, InvalidMetricError) as exc:
            if dt > 4 * opts.dt_min:
                dt *= 0.5
                continue
            raise SingularityDetected(str(exc), trajectory=traj) from exc
        except SolverFailure as exc:
            raise RegularityLostError(str(exc), trajectory=traj) from exc
        try:
            er_new = _entropy_state(g_new, params, er.minimizer)
        except SolverFailure as exc:
            raise RegularityLostError(str(exc), trajectory=traj) from exc
        dmu = er_new.mu - er.mu
        ident = float("nan")
        if kind in (MODIFIED, MODIFIED_PROJECTED):
            i0 = (2.0 / tau) * _grad_norm_sq(g, er, params, kind)
            i1 = (2.0 / tau) * _grad_norm_sq(g_new, er_new, params, kind)
            mean = 0.5 * (i0 + i1)
            ident = abs(dmu / dt - mean) / max(abs(mean), 1e-10)
            if (ident > ident_tol or dmu < -MONOTONE_SLACK) and dt > 4 * opts.dt_min:
                dt *= 0.5
                continue
            if dt < opts.dt_min:
                raise StiffnessFailure("step size underflow", trajectory=traj)
        t += dt
        g, er = g_new, er_new
        accepted += 1
        if opts.refresh_every and accepted % opts.refresh_every == 0:
            er = _entropy_state(g, params, None)  # cold restart guards drift
        gm = grad_mu(g, er, params)
        aux = extra_record(g, er) if extra_record else {}
        traj.states.append(FlowState(t, g, er, gm.l2_dnu_norm, aux=aux))
        traj.step_log.append(StepRecord(t, dt, dmu, ident))
        dt = min(opts.grid_dt_factor * h, dt * 1.5)
    return traj.validate()


# ---------------------------------------------------------------------------
# public flows


def run_normalized(g_init, params, t_max, opts: StepperOpts | None = None) -> Trajectory:
    """tau-normalized flow dg/dt = -2(Ric - g/(2 tau))."""
    opts = opts or StepperOpts()
    if isinstance(g_init, (ConformalSphere, BergerS3)):
        return _integrate_homogeneous(NORMALIZED, g_init, params, t_max, opts)

    def field_fn(g, er):
        return normalized_field(g, params)

    return _integrate_rotsym(NORMALIZED, g_init, params, t_max, opts, field_fn)


def run_modified(g_init, params, t_max, opts: StepperOpts | None = None) -> Trajectory:
    """Entropy ascent dg/dt = -2(Ric + Hess f - g/(2 tau)), f the minimizer."""
    opts = opts or StepperOpts()
    try:
        minimize_mu(g_init, params)
    except SolverFailure as exc:
        raise RegularityLostError(
            "initial metric is outside the regular neighborhood"
        ) from exc
    if isinstance(g_init, (ConformalSphere, BergerS3)):
        return _integrate_homogeneous(MODIFIED, g_init, params, t_max, opts)

    def field_fn(g, er):
        comps, _ = modified_field(g, er, params)
        return comps

    return _integrate_rotsym(MODIFIED, g_init, params, t_max, opts, field_fn)


def run_modified_scale_projected(
    g_init, params, t_max, opts: StepperOpts | None = None
) -> Trajectory:
    """Modified flow with the scale direction projected out of each step."""
    opts = opts or StepperOpts()
    try:
        minimize_mu(g_init, params)
    except SolverFailure as exc:
        raise RegularityLostError(
            "initial metric is outside the regular neighborhood"
        ) from exc
    if isinstance(g_init, (ConformalSphere, BergerS3)):
        return _integrate_homogeneous(MODIFIED_PROJECTED, g_init, params, t_max, opts)

    removed = []

    def field_fn(g, er):
        comps, _ = modified_field(g, er, params)
        comps, mag = scale_projected(comps, g, er, params)
        removed.append(mag)
        return comps

    traj = _integrate_rotsym(
        MODIFIED_PROJECTED, g_init, params, t_max, opts, field_fn
    )
    traj.notes["removed_scale_component"] = removed
    return traj


def run_deturck(g_init, g_ref, params, t_max, opts: StepperOpts | None = None) -> Trajectory:
    """Gauge-fixed normalized flow against the background g_ref (RotSym only)."""
    opts = opts or StepperOpts()
    if not isinstance(g_init, RotSym):
        raise PreconditionError("homogeneous classes need no gauge fixing")
    check_same_class(g_init, g_ref)

    def field_fn(g, er):
        base = normalized_field(g, params)
        u = deturck_vector_field(g, g_ref)
        lxx, ls = rk.rot_lie_derivative(g.phi**2, g.psi**2, g.grid.h, u)
        return (base[0] + lxx, base[1] + ls)

    traj = _integrate_rotsym(DETURCK, g_init, params, t_max, opts, field_fn)
    traj.notes["reference"] = g_ref
    return traj


def deturck_pullback(traj: Trajectory, params) -> list:
    """Pull the DeTurck states back by the accumulated gauge flow.

    Returns metrics solving the plain normalized flow (gauge equivalence).
    """
    g_ref = traj.notes["reference"]
    grid = g_ref.grid
    times = [s.t for s in traj.states]
    fields = [-deturck_vector_field(s.metric, g_ref) * 1.0 for s in traj.states]

    def velocity(tq):
        k = np.searchsorted(times, tq, side="right") - 1
        k = min(max(k, 0), len(times) - 2)
        w = 0.0 if times[k + 1] == times[k] else (tq - times[k]) / (times[k + 1] - times[k])
        u = (1 - w) * fields[k] + w * fields[k + 1]
        g = traj.states[k].metric
        return u / g.phi  # x-coordinate component of the generator

    maps = flow_along_path(grid, velocity, times, substeps=8)
    return [pullback_metric(s.metric, rho) for s, rho in zip(traj.states, maps)]


def diffeo_flow(f_path, params, direction: int = 1, substeps: int = 8):
    """Accumulated reparametrization maps of the flow of -grad f_t.

    ``f_path`` is a sequence of (t, metric, potential); the maps returned are
    sampled at the same times.  Reversing ``direction`` integrates the
    opposite field, so the two runs compose to the identity.
    """
    f_path = list(f_path)
    if len(f_path) < 2:
        grid = f_path[0][1].grid
        return [RadialDiffeo.identity(grid)]
    grid = f_path[0][1].grid
    times = [t for t, _, _ in f_path]
    vels = []
    for t, g, f in f_path:
        fx = d1(f.values, grid.h, EVEN, 2)
        vels.append(-direction * fx / g.phi**2)

    def velocity(tq):
        k = np.searchsorted(times, tq, side="right") - 1
        k = min(max(k, 0), len(times) - 2)
        den = times[k + 1] - times[k]
        w = 0.0 if den == 0.0 else (tq - times[k]) / den
        return (1 - w) * vels[k] + w * vels[k + 1]

    return flow_along_path(grid, velocity, times, substeps=substeps)


def canonical_solution(
    g_init, params, t_max, opts: StepperOpts | None = None
) -> Trajectory:
    """Normalized flow pulled back by the minimizer-gradient flow.

    The construction that realizes the modified flow; carries a per-time
    minimizer-uniqueness check when opts.uniqueness_checks > 0.
    """
    opts = opts or StepperOpts()
    if isinstance(g_init, (ConformalSphere, BergerS3)):
        # the gauge flow is trivial: grad f vanishes on homogeneous classes
        traj = _integrate_homogeneous(MODIFIED, g_init, params, t_max, opts)
        traj.kind = MODIFIED
        traj.notes["construction"] = "canonical"
        return traj
    base = run_normalized(g_init, params, t_max, opts)
    path = [(s.t, s.metric, s.entropy.minimizer) for s in base.states]
    maps = diffeo_flow(path, params, direction=1, substeps=opts.substeps)
    states = []
    rng = np.random.default_rng(opts.seed)
    uniq_times = set()
    if opts.uniqueness_checks > 0:
        pick = np.linspace(0, len(base.states) - 1, opts.uniqueness_checks).astype(int)
        uniq_times = set(int(i) for i in pick)
    uniq_report = []
    for i, (s, rho) in enumerate(zip(base.states, maps)):
        g_t = pullback_metric(s.metric, rho)
        f_t = ScalarField(pullback_scalar(s.metric, rho, s.entropy.minimizer.values))
        er = minimize_mu(g_t, params, MinimizeOpts(warm_start=f_t))
        if i in uniq_times:
            spread = _minimizer_uniqueness_spread(g_t, er, params, rng)
            uniq_report.append((s.t, spread))
        gm = grad_mu(g_t, er, params)
        states.append(FlowState(s.t, g_t, er, gm.l2_dnu_norm, diffeo_log=rho))
    traj = Trajectory(MODIFIED, states, list(base.step_log), {"construction": "canonical"})
    traj.notes["uniqueness_spread"] = uniq_report
    traj.notes["base"] = base
    return traj


def _minimizer_uniqueness_spread(g, er, params, rng, n_restarts=5):
    mus = [er.mu]
    x = g.grid.x
    L = g.grid.length
    for _ in range(n_restarts - 1):
        bump = 0.2 * rng.normal() * np.cos(
            rng.integers(0, 3) * math.pi * x / L
        )
        start = ScalarField(er.minimizer.values + bump)
        try:
            mus.append(minimize_mu(g, params, MinimizeOpts(warm_start=start)).mu)
        except SolverFailure:
            continue
    return max(mus) - min(mus)


def run_coupled(
    g_init, f_init: ScalarField, params, t_max, opts: StepperOpts | None = None
) -> Trajectory:
    """The coupled metric/potential system with W tracked stepwise.

    Homogeneous classes integrate the system directly (it is an ODE there).
    On RotSym grids the potential equation is backward parabolic, so the
    trajectory is built from the normalized flow plus the conjugate equation
    integrated backward from the terminal minimizer, transported into the
    gauge where the displayed system holds.  Both candidate signs of the
    monotonicity integrand are recorded; notes["matched_sign"] reports which
    one reproduces dW/dt.
    """
    opts = opts or StepperOpts()
    check_same_class(g_init, f_init)
    meas = weighted_measure(g_init, f_init, params)
    if abs(meas.total_mass - 1.0) > 1e-6:
        raise PreconditionError("initial potential is not normalized")
    if isinstance(g_init, (ConformalSphere, BergerS3)):
        return _coupled_homogeneous(g_init, f_init, params, t_max, opts)
    return _coupled_rotsym(g_init, f_init, params, t_max, opts)


def _coupled_homogeneous(g0, f0, params, t_max, opts):
    tau = params.tau
    n = g0.dim
    y0 = np.concatenate([np.atleast_1d(metric_components(g0)[0]), [f0.const]])

    def fun(_t, y):
        comps, fval = y[:-1], y[-1]
        g = metric_from_components(g0, (comps,))
        ric = ricci(g).comps[0]
        dg = -2.0 * (ric - comps / (2.0 * tau))
        R = (
            n * (n - 1) / comps[0]
            if isinstance(g0, ConformalSphere)
            else berger_scalar(*comps)
        )
        df = -R + n / (2.0 * tau)  # measure-preserving potential equation
        return np.concatenate([dg, [df]])

    sol = scipy.integrate.solve_ivp(
        fun,
        (0.0, max(t_max, 1e-30)),
        y0,
        method="RK45",
        rtol=opts.rtol,
        atol=opts.atol,
        dense_output=True,
    )
    if not sol.success:
        raise SingularityDetected(sol.message, trajectory=None)
    times = np.linspace(0.0, t_max, max(2, min(201, int(t_max / max(opts.dt_init, 1e-6)) + 1)))
    traj = Trajectory(COUPLED, [], [], {})
    prev_w = None
    for t in times:
        y = sol.sol(t) if t_max > 0 else y0
        g = metric_from_components(g0, (y[:-1],))
        f = ScalarField(np.asarray(y[-1]))
        w = w_functional(g, f, params)
        S = soliton_residual(g, f, params)
        meas = weighted_measure(g, f, params)
        i_plus = 2.0 * params.tau * pointwise_inner(g, S, S) * meas.total_mass
        traj.states.append(
            FlowState(
                float(t),
                g,
                None,
                float("nan"),
                aux={"W": w, "f": f, "I_plus": i_plus, "I_minus": i_plus},
            )
        )
        if prev_w is not None:
            dt = float(t - traj.states[-2].t)
            traj.step_log.append(StepRecord(float(t), dt, w - prev_w, float("nan")))
        prev_w = w
    traj.notes["matched_sign"] = "indistinguishable (Hess f = 0 on homogeneous classes)"
    return traj


def _coupled_rotsym(g0, f0, params, t_max, opts):
    tau = params.tau
    n = g0.dim
    base = run_normalized(g0, params, t_max, opts)
    times = [s.t for s in base.states]
    metrics = [s.metric for s in base.states]
    # conjugate equation backward from the terminal minimizer:
    # d f/d s = Lap f - |grad f|^2 + R - n/(2 tau) with s = T - t
    f = base.states[-1].entropy.minimizer.values.copy()
    fs = [None] * len(times)
    fs[-1] = f.copy()
    m = g0.grid.n_nodes
    for k in range(len(times) - 1, 0, -1):
        dt = times[k] - times[k - 1]
        sub = max(1, int(math.ceil(dt / (0.25 * g0.grid.h))))
        dts = dt / sub
        for j in range(sub):
            # interpolate the metric linearly within the interval
            w = 1.0 - (j + 0.5) / sub
            ga = metrics[k - 1]
            gb = metrics[k]
            phi2 = w * ga.phi**2 + (1 - w) * gb.phi**2
            psi2 = w * ga.psi**2 + (1 - w) * gb.psi**2
            A = rk.rot_laplacian_matrix(phi2, psi2, g0.grid.h, n)
            R = rk.rot_curvature(phi2, psi2, g0.grid.h, n, profile="quadrature")["scal"]
            grad2 = rk.rot_scalar_gradient_sq(phi2, f, g0.grid.h)
            rhs = f + dts * (-grad2 + R - n / (2.0 * tau))
            f = np.linalg.solve(np.eye(m) - dts * A, rhs)
        fs[k - 1] = f.copy()
    # transport to the gauge of the displayed system
    path = [(t, g, ScalarField(fv)) for t, g, fv in zip(times, metrics, fs)]
    maps = diffeo_flow(path, params, direction=1, substeps=opts.substeps)
    traj = Trajectory(COUPLED, [], [], {})
    prev_w = None
    votes = {"plus": 0, "minus": 0}
    for k, (t, g, fv) in enumerate(zip(times, metrics, fs)):
        f_sc = ScalarField(fv)
        w = w_functional(g, f_sc, params)
        S_plus = soliton_residual(g, f_sc, params)
        from .geometry import hessian as _hess

        S_minus = S_plus - _hess(g, f_sc) * 2.0
        meas = weighted_measure(g, f_sc, params)
        ip = meas.integrate(pointwise_inner(g, S_plus, S_plus)) * 2.0 * tau
        im = meas.integrate(pointwise_inner(g, S_minus, S_minus)) * 2.0 * tau
        rho = maps[k]
        g_t = pullback_metric(g, rho)
        f_t = ScalarField(pullback_scalar(g, rho, fv))
        traj.states.append(
            FlowState(
                t,
                g_t,
                None,
                float("nan"),
                diffeo_log=rho,
                aux={"W": w, "f": f_t, "I_plus": ip, "I_minus": im},
            )
        )
        if prev_w is not None:
            dt = t - traj.states[-2].t
            dwdt = (w - prev_w) / dt
            ipm = 0.5 * (ip + traj.states[-2].aux["I_plus"])
            imm = 0.5 * (im + traj.states[-2].aux["I_minus"])
            if abs(dwdt - ipm) < abs(dwdt - imm):
                votes["plus"] += 1
            else:
                votes["minus"] += 1
            traj.step_log.append(StepRecord(t, dt, w - prev_w, float("nan")))
        prev_w = w
    traj.notes["matched_sign"] = (
        "plus (|Ric + Hess f - g/(2 tau)|^2)"
        if votes["plus"] >= votes["minus"]
        else "minus (|Ric - Hess f - g/(2 tau)|^2)"
    )
    traj.notes["sign_votes"] = votes
    return traj


# ---------------------------------------------------------------------------
# extension monitor


@dataclass(frozen=True)
class ExtensionReport:
    delta: float
    distances: np.ndarray
    times: np.ndarray
    sup_distance: float
    tail_limsup: float
    exit_time: float | None
    extendable: bool
    within_three_eighths: bool


def extension_monitor(traj: Trajectory, g0, delta, params) -> ExtensionReport:
    """Track the Holder-proxy distance to g0 against the delta-ball bookkeeping.

    Extendability holds while the tail limsup stays strictly below delta; the
    3 delta / 8 flag mirrors the start-within-delta/8 plus drift-within-
    delta/4 accounting used to chain extensions.
    """
    if traj.kind not in (MODIFIED, MODIFIED_PROJECTED):
        raise PreconditionError("extension monitoring applies to modified flows")
    comps0 = metric_components(g0)
    dists = []
    for s in traj.states:
        diff = Perturbation(
            tuple(b - a for a, b in zip(comps0, metric_components(s.metric)))
        )
        dists.append(holder_proxy_norm(diff, g0, params))
    dists = np.array(dists)
    times = traj.times()
    tail = dists[int(0.5 * len(dists)) :]
    exit_idx = np.where(dists > delta)[0]
    exit_time = float(times[exit_idx[0]]) if exit_idx.size else None
    return ExtensionReport(
        delta=delta,
        distances=dists,
        times=times,
        sup_distance=float(dists.max()),
        tail_limsup=float(tail.max()),
        exit_time=exit_time,
        extendable=bool(tail.max() < delta),
        within_three_eighths=bool(
            dists[0] <= delta / 8.0 and dists.max() <= 3.0 * delta / 8.0
        ),
    )
