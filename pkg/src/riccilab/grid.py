"""Uniform-grid calculus for radial profiles on [0, L].

Every smooth rotationally symmetric object has a definite parity at the
poles (psi and 1-form components odd, phi and scalar fields even), so all
stencils extend fields by reflection before differencing.  Functions act on
the last axis and accept complex input: the entropy module differentiates
through them with complex-step perturbations.
"""

import numpy as np

EVEN = 1
ODD = -1

# 2nd-order interior stencils are the workhorse; 4th-order variants exist
# for the pole-sensitive combinations (see scalar curvature) and for the
# quadrature-grade entropy integrand.


def reflect(u, parity, pad):
    """Extend ``u`` by ``pad`` ghost nodes at each end with the given parity."""
    left = parity * u[..., pad:0:-1]
    right = parity * u[..., -2:-2 - pad:-1]
    return np.concatenate([left, u, right], axis=-1)


def d1(u, h, parity, order=2):
    """First derivative on the uniform grid, parity ghosts at both poles."""
    if order == 2:
        ug = reflect(u, parity, 1)
        return (ug[..., 2:] - ug[..., :-2]) / (2.0 * h)
    if order == 4:
        ug = reflect(u, parity, 2)
        return (
            -ug[..., 4:] + 8.0 * ug[..., 3:-1] - 8.0 * ug[..., 1:-3] + ug[..., :-4]
        ) / (12.0 * h)
    raise ValueError(f"unsupported order {order}")


def d2(u, h, parity, order=2):
    """Second derivative, parity ghosts at both poles."""
    if order == 2:
        ug = reflect(u, parity, 1)
        return (ug[..., 2:] - 2.0 * ug[..., 1:-1] + ug[..., :-2]) / (h * h)
    if order == 4:
        ug = reflect(u, parity, 2)
        return (
            -ug[..., 4:]
            + 16.0 * ug[..., 3:-1]
            - 30.0 * ug[..., 2:-2]
            + 16.0 * ug[..., 1:-3]
            - ug[..., :-4]
        ) / (12.0 * h * h)
    raise ValueError(f"unsupported order {order}")


def trapezoid_weights(m, h, dtype=float):
    w = np.full(m, h, dtype=dtype)
    w[0] = 0.5 * h
    w[-1] = 0.5 * h
    return w


def pole_ratio_odd(u, v, h):
    """Limits of u/v at both poles for fields odd in arclength (l'Hopital).

    Returns (limit at x=0, limit at x=L) as u'(pole)/v'(pole) with 4th-order
    one-sided accuracy via the parity-folded derivative.
    """
    du = d1(u, h, ODD, order=4)
    dv = d1(v, h, ODD, order=4)
    return du[..., 0] / dv[..., 0], du[..., -1] / dv[..., -1]


def pole_ratio_even_vanishing(u, v, h):
    """Limits of u/v at the poles when both are even with double zeros there."""
    du = d2(u, h, EVEN, order=4)
    dv = d2(v, h, EVEN, order=4)
    return du[..., 0] / dv[..., 0], du[..., -1] / dv[..., -1]


def divide_interior(num, den, lim0, limL):
    """Pointwise num/den with prescribed pole values (den vanishes there)."""
    out = np.empty(np.broadcast(num, den).shape, dtype=np.result_type(num, den))
    out[..., 1:-1] = num[..., 1:-1] / den[..., 1:-1]
    out[..., 0] = lim0
    out[..., -1] = limL
    return out


class RadialGrid:
    """Uniform nodes on [0, L] plus the arclength-calculus helpers for a profile.

    ``phi`` enters every derivative through d/ds = (1/phi) d/dx; parity of the
    input decides the ghost extension.
    """

    def __init__(self, length, num_nodes):
        if num_nodes < 8:
            raise ValueError("grid too coarse")
        self.length = float(length)
        self.n_nodes = int(num_nodes) + 1
        self.x = np.linspace(0.0, self.length, self.n_nodes)
        self.h = self.x[1] - self.x[0]

    def __eq__(self, other):
        return (
            isinstance(other, RadialGrid)
            and self.n_nodes == other.n_nodes
            and self.length == other.length
        )

    def __hash__(self):
        return hash((self.length, self.n_nodes))


class ArcCalculus:
    """Arclength derivatives for a fixed radial coefficient phi."""

    def __init__(self, grid: RadialGrid, phi):
        self.grid = grid
        self.h = grid.h
        self.phi = phi
        self.phi2 = phi * phi

    def ds(self, u, parity, order=2):
        return d1(u, self.h, parity, order) / self.phi

    def dss(self, u, parity, order=2):
        dphi = d1(self.phi, self.h, EVEN, order)
        return (
            d2(u, self.h, parity, order)
            - d1(u, self.h, parity, order) * dphi / self.phi
        ) / self.phi2
