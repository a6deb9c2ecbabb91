"""Curvature tensors, weighted operators, measures and norms per symmetry class.

Homogeneous classes (ConformalSphere, BergerS3) use exact closed forms; the
RotSym class delegates to the finite-difference kernels.  Conventions:

* divergence delta = metric trace of the covariant derivative on the first
  slot, so delta^f h = delta h - i_{grad f} h is the negative adjoint of the
  covariant derivative under the e^{-f} dV pairing;
* RotSym tensors are stored as metric components (dx^2 coefficient, unit
  fiber coefficient).
"""

import math

import numpy as np

from . import rotkernels as rk
from .errors import ClassMismatchError
from .grid import EVEN, ODD, d1, trapezoid_weights
from .metrics import (
    BergerS3,
    ConformalSphere,
    MetricRep,
    Perturbation,
    RotSym,
    ScalarField,
    VectorFieldRep,
    WeightedMeasure,
    check_same_class,
    constant_scalar_field,
    sphere_volume,
    zero_perturbation,
    zero_vector_field,
)
from .params import FlowParams

# ---------------------------------------------------------------------------
# closed forms for the Berger class


def berger_ricci_coeffs(a, b, c):
    """Coframe coefficients of Ric for the diagonal left-invariant metric."""
    return np.array(
        [
            2.0 * (a * a - (b - c) ** 2) / (b * c),
            2.0 * (b * b - (a - c) ** 2) / (a * c),
            2.0 * (c * c - (a - b) ** 2) / (a * b),
        ]
    )


def berger_ricci_jacobian(a, b, c):
    """d(ricci coefficients)/d(a,b,c); exact linearization of the closed form."""
    J = np.zeros((3, 3))
    for row, (p, q, r, ip, iq, ir) in enumerate(
        [(a, b, c, 0, 1, 2), (b, a, c, 1, 0, 2), (c, a, b, 2, 0, 1)]
    ):
        num = p * p - (q - r) ** 2
        J[row, ip] = 4.0 * p / (q * r)
        J[row, iq] = -2.0 * (q - r) / (q * r) - 2.0 * num / (q * q * r)
        J[row, ir] = 2.0 * (q - r) / (q * r) - 2.0 * num / (q * r * r)
    return J


def berger_scalar(a, b, c):
    return 2.0 * (2.0 * (a * b + b * c + c * a) - a * a - b * b - c * c) / (a * b * c)


# ---------------------------------------------------------------------------
# curvature operations


def ricci(g: MetricRep) -> Perturbation:
    """Ricci tensor in reduced metric components."""
    if isinstance(g, ConformalSphere):
        # Ric of any round metric is (n-1) * g_unit, scale invariant
        return Perturbation((np.array([float(g.n - 1)]),))
    if isinstance(g, BergerS3):
        return Perturbation((berger_ricci_coeffs(*g.coeffs),))
    if isinstance(g, RotSym):
        cur = rk.rot_curvature(g.phi**2, g.psi**2, g.grid.h, g.n)
        return Perturbation((cur["ric_xx"], cur["ric_sph"]))
    raise ClassMismatchError(f"unknown metric {g!r}")


def scalar_curvature(g: MetricRep) -> ScalarField:
    """Scalar curvature; trace of ricci with respect to g."""
    if isinstance(g, ConformalSphere):
        return ScalarField(np.asarray(g.n * (g.n - 1) / g.c))
    if isinstance(g, BergerS3):
        return ScalarField(np.asarray(berger_scalar(*g.coeffs)))
    if isinstance(g, RotSym):
        cur = rk.rot_curvature(g.phi**2, g.psi**2, g.grid.h, g.n)
        return ScalarField(cur["scal"])
    raise ClassMismatchError(f"unknown metric {g!r}")


def riemann_sup_norm(g: MetricRep) -> float:
    """Sup norm of the full curvature tensor."""
    if isinstance(g, ConformalSphere):
        return math.sqrt(2.0 * g.n * (g.n - 1)) / g.c
    if isinstance(g, BergerS3):
        a, b, c = g.coeffs
        r = berger_ricci_coeffs(a, b, c) / g.coeffs  # orthonormal eigenvalues
        rm2 = 4.0 * float(np.sum(r * r)) - berger_scalar(a, b, c) ** 2
        return math.sqrt(max(rm2, 0.0))
    if isinstance(g, RotSym):
        cur = rk.rot_curvature(g.phi**2, g.psi**2, g.grid.h, g.n)
        n = g.n
        rm2 = 4.0 * (n - 1) * cur["K_rad"] ** 2 + 2.0 * (n - 1) * (n - 2) * cur[
            "K_sph"
        ] ** 2
        return float(np.sqrt(np.max(rm2)))
    raise ClassMismatchError(f"unknown metric {g!r}")


def diameter(g: MetricRep) -> float:
    """Geodesic diameter (closed-form estimate on the Berger class).

    For BergerS3 the value pi*sqrt(max coefficient) is exact at round and a
    continuous comparable estimate off round; it serves the boundedness
    monitors, not fine geometry.
    """
    if isinstance(g, ConformalSphere):
        return math.pi * math.sqrt(g.c)
    if isinstance(g, BergerS3):
        return math.pi * math.sqrt(float(np.max(g.coeffs)))
    if isinstance(g, RotSym):
        w = trapezoid_weights(g.grid.n_nodes, g.grid.h)
        return float(np.sum(w * g.phi))
    raise ClassMismatchError(f"unknown metric {g!r}")


def volume(g: MetricRep) -> float:
    if isinstance(g, ConformalSphere):
        return g.c ** (g.n / 2.0) * sphere_volume(g.n)
    if isinstance(g, BergerS3):
        return math.sqrt(float(np.prod(g.coeffs))) * sphere_volume(3)
    if isinstance(g, RotSym):
        w = rk.rot_volume_weights(g.phi, g.psi, g.grid.h, g.n)
        return float(np.sum(w))
    raise ClassMismatchError(f"unknown metric {g!r}")


# ---------------------------------------------------------------------------
# differential operators


def hessian(g: MetricRep, f: ScalarField) -> Perturbation:
    """Covariant Hessian of f in reduced components."""
    check_same_class(g, f)
    if isinstance(g, (ConformalSphere, BergerS3)):
        # the class admits only constant functions
        return zero_perturbation(g)
    hxx, hs = rk.rot_hessian(g.phi**2, g.psi**2, g.grid.h, f.values)
    return Perturbation((hxx, hs))


def weighted_laplacian(g: MetricRep, f: ScalarField, u: ScalarField) -> ScalarField:
    """Bakry-Emery Laplacian: Delta u - <du, df>."""
    check_same_class(g, f)
    check_same_class(g, u)
    if isinstance(g, (ConformalSphere, BergerS3)):
        return constant_scalar_field(g, 0.0)
    lap = rk.rot_laplacian_apply(
        g.phi**2, g.psi**2, g.grid.h, g.n, u.values, fpot=f.values
    )
    return ScalarField(lap)


def weighted_divergence(g: MetricRep, f: ScalarField, h: Perturbation) -> VectorFieldRep:
    """delta^f h = delta h - i_{grad f} h in reduced components."""
    check_same_class(g, f)
    check_same_class(g, h)
    if isinstance(g, (ConformalSphere, BergerS3)):
        # every reduced (diagonal / conformal) tensor is divergence free
        return zero_vector_field(g)
    out = rk.rot_divergence(
        g.phi**2, g.psi**2, g.grid.h, g.n, h.comps[0], h.comps[1], fpot=f.values
    )
    return VectorFieldRep(out)


def double_weighted_divergence(g: MetricRep, f: ScalarField, h: Perturbation) -> ScalarField:
    """delta^f delta^f h."""
    check_same_class(g, f)
    check_same_class(g, h)
    if isinstance(g, (ConformalSphere, BergerS3)):
        return constant_scalar_field(g, 0.0)
    first = rk.rot_divergence(
        g.phi**2, g.psi**2, g.grid.h, g.n, h.comps[0], h.comps[1], fpot=f.values
    )
    out = rk.rot_oneform_divergence(
        g.phi**2, g.psi**2, g.grid.h, g.n, first, fpot=f.values
    )
    return ScalarField(out)


def lie_derivative(g: MetricRep, X: VectorFieldRep) -> Perturbation:
    """Lie derivative of g along X, projected to the reduced class.

    On the homogeneous classes every class-preserving reduced flow acts
    trivially on the coefficients (left-invariant Lie derivatives are purely
    off-diagonal), so the result is zero there.
    """
    check_same_class(g, X)
    if isinstance(g, (ConformalSphere, BergerS3)):
        return zero_perturbation(g)
    lxx, ls = rk.rot_lie_derivative(g.phi**2, g.psi**2, g.grid.h, X.comps)
    return Perturbation((lxx, ls))


def div_dual(g: MetricRep, f: ScalarField, X: VectorFieldRep, weighted=True) -> Perturbation:
    """Dual of the divergence applied to a 1-form (vector field rep).

    adjoint of delta^f under the dnu pairing is -sym(grad X^flat) in both the
    weighted and unweighted readings; the unweighted delta's dnu-dual picks up
    the extra sym(df x omega) term.
    """
    check_same_class(g, f)
    check_same_class(g, X)
    if isinstance(g, (ConformalSphere, BergerS3)):
        return zero_perturbation(g)
    sym = lie_derivative(g, X) * 0.5
    out = sym * (-1.0)
    if not weighted:
        phi = g.phi
        f_s = d1(f.values, g.grid.h, EVEN, 2) / phi
        # sym(df x omega): radial-radial only for radial data
        corr = Perturbation((f_s * X.comps * phi**2, np.zeros_like(phi)))
        out = out + corr
    return out


# ---------------------------------------------------------------------------
# measures and norms


def weighted_measure(g: MetricRep, f: ScalarField, params: FlowParams) -> WeightedMeasure:
    """dnu = (4 pi tau)^{-n/2} e^{-f} dV over the reduced domain."""
    check_same_class(g, f)
    n = g.dim
    scale = (4.0 * math.pi * params.tau) ** (-n / 2.0)
    if isinstance(g, (ConformalSphere, BergerS3)):
        dens = scale * math.exp(-f.const)
        w = dens * volume(g)
        return WeightedMeasure(np.asarray(dens), np.asarray(w), float(w))
    w = rk.rot_volume_weights(g.phi, g.psi, g.grid.h, g.n)
    dens = scale * np.exp(-f.values)
    wq = w * dens
    return WeightedMeasure(dens, wq, float(np.sum(wq)))


def pointwise_inner(g: MetricRep, h1: Perturbation, h2: Perturbation):
    """<h1, h2>_g as a scalar (homogeneous) or nodal array."""
    if isinstance(g, ConformalSphere):
        return float(h1.comps[0][0] * h2.comps[0][0]) * g.n / g.c**2
    if isinstance(g, BergerS3):
        return float(np.sum(h1.comps[0] * h2.comps[0] / g.coeffs**2))
    return rk.rot_tensor_inner(
        g.phi**2,
        g.psi**2,
        g.grid.h,
        g.n,
        h1.comps[0],
        h1.comps[1],
        h2.comps[0],
        h2.comps[1],
    )


def l2_weighted_inner(
    h1: Perturbation, h2: Perturbation, g: MetricRep, f: ScalarField, params: FlowParams
) -> float:
    """<h1, h2> in L^2(dnu)."""
    check_same_class(g, h1)
    check_same_class(g, h2)
    meas = weighted_measure(g, f, params)
    ip = pointwise_inner(g, h1, h2)
    if isinstance(g, (ConformalSphere, BergerS3)):
        return float(ip * meas.total_mass)
    return meas.integrate(ip)


def l2_weighted_norm(
    h: Perturbation, g: MetricRep, f: ScalarField, params: FlowParams
) -> float:
    return math.sqrt(max(l2_weighted_inner(h, h, g, f, params), 0.0))


def _rot_component_fields(g: RotSym, h: Perturbation):
    """Dimensionless tensor components (ds^2 coefficient, fiber ratio)."""
    a = h.comps[0] / g.phi**2
    q = rk.rot_fiber_ratio(h.comps[1], g.psi**2, g.grid.h)
    return a, q


def sobolev_norm(h: Perturbation, g: MetricRep, l: int) -> float:
    """Discrete W^{l,2}(dV) norm: arclength derivatives of the components."""
    if l < 0:
        raise ValueError("l must be >= 0")
    check_same_class(g, h)
    if isinstance(g, ConformalSphere):
        return abs(float(h.comps[0][0])) * math.sqrt(g.n) / g.c * math.sqrt(volume(g))
    if isinstance(g, BergerS3):
        ip = float(np.sum(h.comps[0] ** 2 / g.coeffs**2))
        return math.sqrt(ip * volume(g))
    w = rk.rot_volume_weights(g.phi, g.psi, g.grid.h, g.n)
    a, q = _rot_component_fields(g, h)
    total = 0.0
    par = EVEN
    for _ in range(l + 1):
        total += float(np.sum(w * (a * a + (g.n - 1) * q * q)))
        a = d1(a, g.grid.h, par, 2) / g.phi
        q = d1(q, g.grid.h, par, 2) / g.phi
        par = -par
    return math.sqrt(total)


def holder_proxy_norm(h: Perturbation, g0: MetricRep, params: FlowParams) -> float:
    """Grid C^{k,gamma} proxy against the base metric g0.

    Sup norms of divided differences up to order k plus the gamma-Holder
    seminorm of the k-th one; exact tensor sup norm on homogeneous classes.
    """
    check_same_class(g0, h)
    if isinstance(g0, ConformalSphere):
        return abs(float(h.comps[0][0])) * math.sqrt(g0.n) / g0.c
    if isinstance(g0, BergerS3):
        return math.sqrt(float(np.sum(h.comps[0] ** 2 / g0.coeffs**2)))
    k, gam = params.holder_k, params.holder_gamma
    a, q = _rot_component_fields(g0, h)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (g0.phi[1:] + g0.phi[:-1]) * g0.grid.h)])
    total = 0.0
    fields = [(a, EVEN), (q, EVEN)]
    for u, par in fields:
        v = u
        p = par
        for j in range(k + 1):
            total = max(total, float(np.max(np.abs(v))))
            if j < k:
                v = d1(v, g0.grid.h, p, 2) / g0.phi
                p = -p
        dv = np.abs(v[:, None] - v[None, :])
        dsm = np.abs(s[:, None] - s[None, :])
        mask = dsm > 0
        total = max(total, float(np.max(dv[mask] / dsm[mask] ** gam)))
    return total
