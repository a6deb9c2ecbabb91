"""Radial reparametrizations of [0, L]: the reduced diffeomorphism group.

Only the RotSym class has nontrivial reduced diffeomorphisms; they are
monotone maps of the radial coordinate fixing both poles.  Pullback of a
profile metric preserves the smooth-closure pole conditions exactly because
the slope ratio psi'(0)/phi(0) is invariant under rho'(0) scaling.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DiffeoDegeneracyError
from .grid import RadialGrid
from .metrics import RotSym


class RadialDiffeo:
    """Monotone map of [0, L] onto itself, sampled on the grid nodes."""

    def __init__(self, grid: RadialGrid, values):
        values = np.asarray(values, dtype=float).copy()
        if values.shape != (grid.n_nodes,):
            raise DiffeoDegeneracyError("sample length does not match the grid")
        if abs(values[0]) > 1e-12 or abs(values[-1] - grid.length) > 1e-9:
            raise DiffeoDegeneracyError("map must fix both poles")
        values[0] = 0.0
        values[-1] = grid.length
        if np.any(np.diff(values) <= 0.0):
            raise DiffeoDegeneracyError("map lost monotonicity")
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self._spline = CubicSpline(grid.x, values, bc_type="not-a-knot")

    @classmethod
    def identity(cls, grid: RadialGrid):
        return cls(grid, grid.x)

    def __call__(self, x):
        return np.clip(self._spline(x), 0.0, self.grid.length)

    def deriv(self, x):
        return self._spline(x, 1)

    def compose(self, other: "RadialDiffeo") -> "RadialDiffeo":
        """self after other: x -> self(other(x))."""
        return RadialDiffeo(self.grid, self(other.values))

    def inverse(self) -> "RadialDiffeo":
        inv = CubicSpline(self.values, self.grid.x, bc_type="not-a-knot")
        return RadialDiffeo(self.grid, np.clip(inv(self.grid.x), 0.0, self.grid.length))

    def sup_distance_to_identity(self) -> float:
        return float(np.max(np.abs(self.values - self.grid.x)))


def pullback_metric(g: RotSym, rho: RadialDiffeo) -> RotSym:
    """(rho^* g): phi -> phi(rho) rho', psi -> psi(rho), on the same grid."""
    if g.grid != rho.grid:
        raise DiffeoDegeneracyError("map and metric live on different grids")
    x = g.grid.x
    sphi = CubicSpline(x, g.phi, bc_type="not-a-knot")
    spsi = CubicSpline(x, g.psi, bc_type="not-a-knot")
    y = rho.values
    phi_new = sphi(y) * rho.deriv(x)
    psi_new = spsi(y)
    psi_new[0] = 0.0
    psi_new[-1] = 0.0
    return RotSym(g.n, g.grid, phi_new, psi_new)


def pullback_scalar(g: RotSym, rho: RadialDiffeo, values) -> np.ndarray:
    s = CubicSpline(g.grid.x, values, bc_type="not-a-knot")
    return s(rho.values)


def flow_time_dependent(
    grid: RadialGrid, velocity, t0: float, t1: float, substeps: int = 64
) -> RadialDiffeo:
    """Flow map of a time-dependent radial field from t0 to t1.

    ``velocity(t)`` must return nodal values of the field (zero at the poles);
    trajectories of all nodes are advanced together with RK4 on spline
    interpolants.
    """
    x = grid.x.copy()
    dt = (t1 - t0) / substeps
    for k in range(substeps):
        t = t0 + k * dt

        def vel(tq, pts):
            v = velocity(tq)
            s = CubicSpline(grid.x, v, bc_type="not-a-knot")
            out = s(np.clip(pts, 0.0, grid.length))
            return out

        k1 = vel(t, x)
        k2 = vel(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = vel(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = vel(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x[0] = 0.0
        x[-1] = grid.length
        x = np.clip(x, 0.0, grid.length)
    return RadialDiffeo(grid, x)


def flow_static(grid: RadialGrid, field, time: float = 1.0, substeps: int = 64) -> RadialDiffeo:
    """Time-``time`` flow map of a static radial field."""
    return flow_time_dependent(grid, lambda t: field, 0.0, time, substeps)


def flow_along_path(grid: RadialGrid, velocity, times, substeps: int = 8):
    """Accumulated flow maps at each of ``times`` (continuous trajectories).

    Node positions advance through the whole path, so the k-th returned map
    is the flow from times[0] to times[k]; no map composition is involved.
    """
    x = grid.x.copy()
    maps = [RadialDiffeo(grid, x)]
    for t0, t1 in zip(times[:-1], times[1:]):
        dt = (t1 - t0) / substeps
        for k in range(substeps):
            t = t0 + k * dt

            def vel(tq, pts):
                s = CubicSpline(grid.x, velocity(tq), bc_type="not-a-knot")
                return s(np.clip(pts, 0.0, grid.length))

            k1 = vel(t, x)
            k2 = vel(t + 0.5 * dt, x + 0.5 * dt * k1)
            k3 = vel(t + 0.5 * dt, x + 0.5 * dt * k2)
            k4 = vel(t + dt, x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            x[0] = 0.0
            x[-1] = grid.length
            x = np.clip(x, 0.0, grid.length)
        maps.append(RadialDiffeo(grid, x))
    return maps
