"""Symmetry-reduced metric representations and their tangent/field types.

Three classes, each reducing tensor calculus to 0 or 1 dimensions:

* ``ConformalSphere``: c * (unit round S^n); one positive coefficient.
* ``BergerS3``: diagonal left-invariant metric a s1^2 + b s2^2 + c s3^2 on
  S^3 in a Milnor coframe with [e1,e2] = 2 e3 cyclically, so a=b=c=s is the
  round sphere of radius sqrt(s).
* ``RotSym``: phi(x)^2 dx^2 + psi(x)^2 g_{S^{n-1}} on a uniform grid over
  [0, L], poles at both ends.

Perturbations hold metric-component increments in the matching layout:
d(c), (da, db, dc), or nodal (h_xx, h_sph) with h_sph the coefficient of the
unit S^{n-1} metric (so the metric itself has components (phi^2, psi^2)).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ClassMismatchError, DegenerateProfileError, InvalidMetricError
from .grid import EVEN, ODD, RadialGrid, d1

POSITIVITY_FLOOR = 1e-12
POLE_TOL = 1e-6


def sphere_volume(n: int) -> float:
    """Volume of the unit round S^n."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def sphere_area(n: int) -> float:
    """Area of the unit S^{n-1} (the fiber of a RotSym profile in dim n)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


# ---------------------------------------------------------------------------
# metric classes


@dataclass(frozen=True)
class ConformalSphere:
    """Round sphere c * g_unit; the one-parameter conformal family."""

    n: int
    c: float

    def __post_init__(self):
        if self.n < 2:
            raise InvalidMetricError(f"dimension must be >= 2, got {self.n}")
        if not self.c > POSITIVITY_FLOOR:
            raise DegenerateProfileError(
                f"conformal factor {self.c} at or below positivity floor"
            )

    @property
    def dim(self):
        return self.n


@dataclass(frozen=True, eq=False)
class BergerS3:
    """Diagonal left-invariant metric on S^3, squared coframe coefficients."""

    coeffs: np.ndarray  # (3,) = (a, b, c)

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.shape != (3,):
            raise InvalidMetricError("BergerS3 needs exactly three coefficients")
        if np.any(arr <= POSITIVITY_FLOOR):
            raise DegenerateProfileError(
                f"Berger coefficients {arr} at or below positivity floor"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def dim(self):
        return 3

    @property
    def n(self):
        return 3


@dataclass(frozen=True, eq=False)
class RotSym:
    """Rotationally symmetric profile phi^2 dx^2 + psi^2 g_{S^{n-1}} on [0, L]."""

    n: int
    grid: RadialGrid
    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).copy()
        psi = np.asarray(self.psi, dtype=float).copy()
        if phi.shape != (self.grid.n_nodes,) or psi.shape != (self.grid.n_nodes,):
            raise InvalidMetricError("profile length does not match the grid")
        if self.n < 2:
            raise InvalidMetricError(f"dimension must be >= 2, got {self.n}")
        if np.any(phi <= POSITIVITY_FLOOR):
            raise DegenerateProfileError("phi at or below positivity floor")
        if np.any(psi[1:-1] <= POSITIVITY_FLOOR):
            raise DegenerateProfileError("psi not positive in the interior")
        if abs(psi[0]) > POLE_TOL or abs(psi[-1]) > POLE_TOL:
            raise DegenerateProfileError("psi must vanish at both poles")
        psi[0] = 0.0
        psi[-1] = 0.0
        # smooth closure: dpsi/ds = +1 at x=0 and -1 at x=L
        dpsi = d1(psi, self.grid.h, ODD, order=4)
        s0 = dpsi[0] / phi[0]
        sL = dpsi[-1] / phi[-1]
        if abs(s0 - 1.0) > 1e-3 or abs(sL + 1.0) > 1e-3:
            raise DegenerateProfileError(
                f"pole slopes dpsi/ds = ({s0:.6f}, {sL:.6f}) violate smooth closure"
            )
        phi.flags.writeable = False
        psi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def dim(self):
        return self.n


MetricRep = ConformalSphere | BergerS3 | RotSym


# ---------------------------------------------------------------------------
# fields on a class


def _freeze(a):
    a = np.asarray(a, dtype=float).copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Function in the symmetry class: one real (homogeneous) or nodal values."""

    values: np.ndarray  # shape () or (n_nodes,)

    def __post_init__(self):
        v = _freeze(self.values)
        if not np.all(np.isfinite(v)):
            raise InvalidMetricError("scalar field has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def is_grid(self):
        return self.values.ndim == 1

    @property
    def const(self):
        if self.is_grid:
            raise ClassMismatchError("grid field has no single constant value")
        return float(self.values)

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.values - o)

    def __mul__(self, a):
        return ScalarField(self.values * a)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Symmetric (0,2)-tensor increment in reduced metric components."""

    comps: tuple  # class-matched arrays, see module docstring

    def __post_init__(self):
        object.__setattr__(self, "comps", tuple(_freeze(c) for c in self.comps))

    def __add__(self, other):
        return Perturbation(tuple(a + b for a, b in zip(self.comps, other.comps)))

    def __sub__(self, other):
        return Perturbation(tuple(a - b for a, b in zip(self.comps, other.comps)))

    def __mul__(self, a):
        return Perturbation(tuple(c * a for c in self.comps))

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def flat(self):
        return np.concatenate([np.atleast_1d(c) for c in self.comps])


@dataclass(frozen=True, eq=False)
class VectorFieldRep:
    """Reduced vector field: scale coefficient, Lie-algebra coefficients, or
    nodal radial component u = X^s (vanishing at the poles)."""

    comps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "comps", _freeze(self.comps))

    def __add__(self, other):
        return VectorFieldRep(self.comps + other.comps)

    def __sub__(self, other):
        return VectorFieldRep(self.comps - other.comps)

    def __mul__(self, a):
        return VectorFieldRep(self.comps * a)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Nodal density of (4 pi tau)^{-n/2} e^{-f} dV and quadrature data."""

    density: np.ndarray  # () or (n_nodes,)
    weights: np.ndarray  # quadrature weights w_i with  integral F dnu = sum w_i F_i
    total_mass: float

    def __post_init__(self):
        object.__setattr__(self, "density", _freeze(self.density))
        object.__setattr__(self, "weights", _freeze(self.weights))

    def integrate(self, values):
        return float(np.sum(self.weights * values))


# ---------------------------------------------------------------------------
# component views shared by flows and linearizations


def metric_components(g: MetricRep) -> tuple:
    """Metric components in the Perturbation layout for g's class."""
    if isinstance(g, ConformalSphere):
        return (np.array([g.c]),)
    if isinstance(g, BergerS3):
        return (np.asarray(g.coeffs),)
    if isinstance(g, RotSym):
        return (g.phi**2, g.psi**2)
    raise ClassMismatchError(f"unknown metric {g!r}")


def metric_from_components(like: MetricRep, comps) -> MetricRep:
    """Rebuild a metric of ``like``'s class from Perturbation-layout components."""
    if isinstance(like, ConformalSphere):
        return ConformalSphere(like.n, float(np.atleast_1d(comps[0])[0]))
    if isinstance(like, BergerS3):
        return BergerS3(np.asarray(comps[0], dtype=float))
    if isinstance(like, RotSym):
        phi2, psi2 = comps
        if np.any(np.asarray(phi2) <= 0.0) or np.any(np.asarray(psi2)[1:-1] <= 0.0):
            raise DegenerateProfileError("metric components lost positivity")
        psi2 = np.asarray(psi2, dtype=float).copy()
        psi2[0] = 0.0
        psi2[-1] = 0.0
        return RotSym(like.n, like.grid, np.sqrt(phi2), np.sqrt(np.maximum(psi2, 0.0)))
    raise ClassMismatchError(f"unknown metric {like!r}")


def metric_plus(g: MetricRep, h: Perturbation, eps: float = 1.0) -> MetricRep:
    """g + eps*h as a metric of the same class (validates positivity)."""
    check_same_class(g, h)
    comps = metric_components(g)
    return metric_from_components(
        g, tuple(c + eps * d for c, d in zip(comps, h.comps))
    )


def metric_as_perturbation(g: MetricRep) -> Perturbation:
    """The metric itself viewed as a tangent direction (the scale direction)."""
    return Perturbation(metric_components(g))


def zero_perturbation(g: MetricRep) -> Perturbation:
    return Perturbation(tuple(np.zeros_like(c) for c in metric_components(g)))


def zero_vector_field(g: MetricRep) -> VectorFieldRep:
    if isinstance(g, ConformalSphere):
        return VectorFieldRep(np.zeros(1))
    if isinstance(g, BergerS3):
        return VectorFieldRep(np.zeros(3))
    return VectorFieldRep(np.zeros(g.grid.n_nodes))


def constant_scalar_field(g: MetricRep, value: float) -> ScalarField:
    if isinstance(g, RotSym):
        return ScalarField(np.full(g.grid.n_nodes, float(value)))
    return ScalarField(np.asarray(float(value)))


def check_same_class(g: MetricRep, obj) -> None:
    """Raise ClassMismatchError unless ``obj`` is shaped for g's class."""
    if isinstance(obj, (ScalarField, VectorFieldRep)):
        arrs = [obj.values] if isinstance(obj, ScalarField) else [obj.comps]
        if isinstance(g, RotSym):
            ok = all(a.ndim == 1 and a.shape[0] == g.grid.n_nodes for a in arrs)
        elif isinstance(g, BergerS3):
            ok = all(a.ndim == 0 or a.shape[0] in (1, 3) for a in arrs)
        else:
            ok = all(a.ndim == 0 or a.shape[0] == 1 for a in arrs)
        if not ok:
            raise ClassMismatchError(f"field shape does not match {type(g).__name__}")
        return
    if isinstance(obj, Perturbation):
        want = tuple(np.atleast_1d(c).shape for c in metric_components(g))
        got = tuple(np.atleast_1d(c).shape for c in obj.comps)
        if len(want) != len(got) or any(w != v for w, v in zip(want, got)):
            raise ClassMismatchError(
                f"perturbation layout {got} does not match {type(g).__name__} {want}"
            )
        return
    if isinstance(obj, (ConformalSphere, BergerS3, RotSym)):
        if type(obj) is not type(g):
            raise ClassMismatchError(
                f"{type(obj).__name__} does not match {type(g).__name__}"
            )
        if isinstance(g, RotSym) and (g.grid != obj.grid or g.n != obj.n):
            raise ClassMismatchError("RotSym metrics live on different grids")
        if isinstance(g, ConformalSphere) and g.n != obj.n:
            raise ClassMismatchError("conformal spheres of different dimension")
        return
    raise ClassMismatchError(f"cannot match {obj!r} against {type(g).__name__}")


# ---------------------------------------------------------------------------
# factories


def round_conformal(n: int, c: float) -> ConformalSphere:
    return ConformalSphere(n, c)


def round_berger(c: float) -> BergerS3:
    """Round S^3 of radius sqrt(c) in the Berger class."""
    return BergerS3(np.array([c, c, c]))


def round_rotsym(n: int, c: float, num_intervals: int) -> RotSym:
    """Round S^n of radius r = sqrt(c) as a profile: phi=1, psi=r sin(x/r)."""
    r = math.sqrt(c)
    grid = RadialGrid(math.pi * r, num_intervals)
    psi = r * np.sin(grid.x / r)
    return RotSym(n, grid, np.ones(grid.n_nodes), psi)


def round_metric(kind: str, n: int, c: float, num_intervals: int = 200) -> MetricRep:
    if kind == "conformal":
        return round_conformal(n, c)
    if kind == "berger":
        if n != 3:
            raise InvalidMetricError("Berger class is three-dimensional")
        return round_berger(c)
    if kind == "rotsym":
        return round_rotsym(n, c, num_intervals)
    raise InvalidMetricError(f"unknown class {kind!r}")


def class_name(g: MetricRep) -> str:
    if isinstance(g, ConformalSphere):
        return "conformal"
    if isinstance(g, BergerS3):
        return "berger"
    if isinstance(g, RotSym):
        return "rotsym"
    raise ClassMismatchError(f"unknown metric {g!r}")


def bumped_rotsym(base: RotSym, amp: float, mode: int = 1, phi_amp: float = 0.0) -> RotSym:
    """Round-compatible shape bump: psi scaled by 1 + amp*b(x), b=0 at poles."""
    x = base.grid.x
    L = base.grid.length
    b = np.sin(math.pi * x / L) ** 2 * np.cos(mode * math.pi * x / L)
    p = np.cos(mode * math.pi * x / L)
    return RotSym(
        base.n,
        base.grid,
        base.phi * (1.0 + phi_amp * p),
        base.psi * (1.0 + amp * b),
    )


def perturbed_berger(c: float, amp: float, preserve_product: bool = True) -> BergerS3:
    """Shape-perturbed round Berger metric (a,b,c) = c*(1+amp, 1-amp, 1)."""
    coeffs = np.array([c * (1.0 + amp), c * (1.0 - amp), c])
    if preserve_product:
        coeffs *= (c**3 / np.prod(coeffs)) ** (1.0 / 3.0)
    return BergerS3(coeffs)


def smooth_perturbation_basis(g: MetricRep, kmax: int | None = None) -> list:
    """Tensor mode basis of the smooth tangent space of the reduced class.

    Homogeneous classes: the coordinate directions.  RotSym: cosine modes,
    truncated to the band the stencils resolve.  Tangency to the class of
    smooth closed profiles requires the dimensionless components a = h_xx /
    phi^2 and q = h_sph / psi^2 to agree at the poles (otherwise the
    perturbed metric has first-order cone defects), so the basis holds
    trace-type modes with a = q plus single-component modes vanishing at
    both ends.
    """
    if isinstance(g, ConformalSphere):
        return [Perturbation((np.array([1.0]),))]
    if isinstance(g, BergerS3):
        eye = np.eye(3)
        return [Perturbation((eye[i],)) for i in range(3)]
    m = g.grid.n_nodes
    if kmax is None:
        kmax = min(max(8, m // 8), 32)
    x = g.grid.x
    L = g.grid.length
    phi2 = g.phi**2
    psi2 = g.psi**2
    zeros = np.zeros(m)
    cols = []
    # trace-type modes (a = q = u_k) plus fiber-only modes vanishing at the
    # poles span all pairs with matching pole values, without redundancy
    for k in range(kmax):
        e = np.cos(k * math.pi * x / L)
        cols.append(Perturbation((phi2 * e, psi2 * e)))
    for k in range(kmax - 2):
        e = np.cos(k * math.pi * x / L) - np.cos((k + 2) * math.pi * x / L)
        cols.append(Perturbation((zeros, psi2 * e)))
    return cols


def random_tangent_perturbation(g: MetricRep, rng, scale: float = 1.0) -> Perturbation:
    """Random smooth class-tangent direction (normalized basis combination)."""
    basis = smooth_perturbation_basis(g, kmax=None if not isinstance(g, RotSym) else 6)
    coeff = rng.normal(size=len(basis))
    coeff /= np.linalg.norm(coeff)
    out = None
    for c, b in zip(coeff, basis):
        out = b * c if out is None else out + b * c
    return out * scale
