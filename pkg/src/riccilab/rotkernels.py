"""Raw-array curvature and operator kernels for the rotationally symmetric class.

All functions act on metric component arrays (phi2, psi2) with the node axis
last, broadcast over leading batch axes, and accept complex dtype so callers
can differentiate through them with complex-step perturbations.  Interior
psi2 must stay off zero; the pole entries are exactly zero and are never
perturbed (square roots are not differentiable there).

Stencil policy: 2nd-order central differences everywhere, except (a) the
pole-limit evaluations and the first derivative inside (1 - psi_s^2)/psi^2,
which use 4th-order stencils to tame the 1/s^2 amplification near the poles,
and (b) the optional "quadrature" profile where every stencil is 4th order
(used for entropy integrands; keeps the plain geometry operators 2nd order).
"""

import numpy as np

from .grid import EVEN, ODD, d1, d2, trapezoid_weights
from .metrics import sphere_area


def _orders(profile):
    if profile == "geometry":
        return 2, 4  # base order, pole/K2 order
    if profile == "quadrature":
        return 4, 4
    raise ValueError(f"unknown stencil profile {profile!r}")


def rot_basics(phi2, psi2, h, profile="geometry"):
    """Profile derivatives: phi, psi, psi_s, psi_ss and the pole limit of psi_ss/psi."""
    base, hi = _orders(profile)
    phi = np.sqrt(phi2)
    psi = np.sqrt(np.where(np.real(psi2) <= 0.0, 0.0, psi2))
    dphi = d1(phi, h, EVEN, base) / phi
    psi_s = d1(psi, h, ODD, base) / phi
    psi_ss = (d2(psi, h, ODD, base) - d1(psi, h, ODD, base) * dphi) / phi2
    # pole limit of psi_ss/psi by l'Hopital needs 4th-order pieces: the nested
    # 2nd-order value inherits an O(h^2) error from the psi_ss truncation
    dphi4 = d1(phi, h, EVEN, hi) / phi
    psi_s4 = d1(psi, h, ODD, hi) / phi
    psi_ss4 = (d2(psi, h, ODD, hi) - d1(psi, h, ODD, hi) * dphi4) / phi2
    psi_sss4 = d1(psi_ss4, h, ODD, hi) / phi
    lim0 = psi_sss4[..., 0] / psi_s4[..., 0]
    limL = psi_sss4[..., -1] / psi_s4[..., -1]
    return {
        "phi": phi,
        "psi": psi,
        "phi2": phi2,
        "psi2": psi2,
        "dlogphi": dphi,
        "psi_s": psi_s,
        "psi_s4": psi_s4,
        "psi_ss": psi_ss,
        "ratio_lim": (lim0, limL),
    }


def _with_poles(interior_num, interior_den, lim0, limL):
    out = np.empty(
        np.broadcast(interior_num, interior_den).shape,
        dtype=np.result_type(interior_num, interior_den),
    )
    out[..., 1:-1] = interior_num[..., 1:-1] / interior_den[..., 1:-1]
    out[..., 0] = lim0
    out[..., -1] = limL
    return out


def rot_curvature(phi2, psi2, h, n, profile="geometry"):
    """Ricci components, scalar curvature and sectional curvatures.

    Returns a dict with ric_xx (dx^2 coefficient), ric_sph (coefficient of the
    unit fiber metric), scal, K_rad, K_sph.
    """
    b = rot_basics(phi2, psi2, h, profile)
    psi, psi_s, psi_ss = b["psi"], b["psi_s"], b["psi_ss"]
    lim0, limL = b["ratio_lim"]
    rat = _with_poles(psi_ss, psi, lim0, limL)  # psi_ss / psi
    psk = b["psi_s4"] if profile == "geometry" else b["psi_s"]
    one_minus = 1.0 - psk * psk
    K_sph = _with_poles(one_minus, psi2, -lim0, -limL)  # (1 - psi_s^2)/psi^2
    K_rad = -rat
    ric_xx = -(n - 1) * rat * phi2
    ric_sph = -psi * psi_ss + (n - 2) * (1.0 - psi_s * psi_s)
    # pole values of the fiber coefficient are exact zeros (tensor smoothness)
    ric_sph = ric_sph.copy()
    ric_sph[..., 0] = 0.0
    ric_sph[..., -1] = 0.0
    scal = -2.0 * (n - 1) * rat + (n - 1) * (n - 2) * K_sph
    return {
        "ric_xx": ric_xx,
        "ric_sph": ric_sph,
        "scal": scal,
        "K_rad": K_rad,
        "K_sph": K_sph,
        "basics": b,
    }


def rot_volume_weights(phi, psi, h, n, dtype=None):
    """Trapezoid quadrature weights for integral(F dV) = sum(w * F)."""
    dtype = dtype or np.result_type(phi, psi)
    w = trapezoid_weights(phi.shape[-1], h, dtype=float)
    return sphere_area(n) * w * phi * psi ** (n - 1)


def rot_scalar_gradient_sq(phi2, f, h):
    """|grad f|^2 = f_s^2 for an even scalar field."""
    fs = d1(f, h, EVEN, 2) / np.sqrt(phi2)
    return fs * fs


def rot_laplacian_apply(phi2, psi2, h, n, u, fpot=None, profile="geometry"):
    """(Weighted) Laplacian of an even scalar field u; pole value n*u_ss.

    The (psi_s/psi) u_s product uses the high-order first derivatives: its
    truncation error does not vanish with u_s at the poles and would
    otherwise dominate the u_ss part three-fold.
    """
    base, hi = _orders(profile)
    b = rot_basics(phi2, psi2, h, profile)
    phi, psi = b["phi"], b["psi"]
    psi_s = b["psi_s4"]
    u_s = d1(u, h, EVEN, hi) / phi
    u_ss = (d2(u, h, EVEN, base) - d1(u, h, EVEN, base) * b["dlogphi"]) / phi2
    lap = np.empty(
        np.broadcast(u_ss, psi).shape, dtype=np.result_type(u_ss, psi, phi2)
    )
    lap[..., 1:-1] = u_ss[..., 1:-1] + (n - 1) * (
        psi_s[..., 1:-1] / psi[..., 1:-1]
    ) * u_s[..., 1:-1]
    lap[..., 0] = n * u_ss[..., 0]
    lap[..., -1] = n * u_ss[..., -1]
    if fpot is not None:
        f_s = d1(fpot, h, EVEN, hi) / phi
        lap = lap - f_s * u_s
    return lap


def operator_matrix(apply_fn, m):
    """Dense matrix of a linear operator via one batched identity application."""
    return np.asarray(apply_fn(np.eye(m))).T


def rot_divergence(phi2, psi2, h, n, h_xx, h_sph, fpot=None):
    """(Weighted) divergence of a symmetric tensor, arclength 1-form component.

    Convention: div is the metric trace of the covariant derivative on the
    first slot, so the result is the negative adjoint of omega -> grad(omega)
    under the e^{-f} dV pairing.  Odd at the poles, hence exact zeros there.
    """
    b = rot_basics(phi2, psi2, h)
    phi, psi, psi_s = b["phi"], b["psi"], b["psi_s"]
    a = h_xx / phi2  # ds^2 component
    q0, qL = _pole_even_vanishing_ratio(h_sph, psi2, h)
    q = _with_poles(h_sph, psi2, q0, qL)  # fiber component / psi^2
    a_s = d1(a, h, EVEN, 2) / phi
    out = np.empty(np.broadcast(a_s, psi).shape, dtype=np.result_type(a_s, q))
    out[..., 1:-1] = a_s[..., 1:-1] + (n - 1) * (
        psi_s[..., 1:-1] / psi[..., 1:-1]
    ) * (a[..., 1:-1] - q[..., 1:-1])
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    if fpot is not None:
        f_s = d1(fpot, h, EVEN, 2) / phi
        out = out - f_s * a
        out[..., 0] = 0.0
        out[..., -1] = 0.0
    return out


def rot_oneform_divergence(phi2, psi2, h, n, omega, fpot=None):
    """(Weighted) divergence of a radial 1-form (odd field); even result."""
    b = rot_basics(phi2, psi2, h)
    phi, psi, psi_s = b["phi"], b["psi"], b["psi_s"]
    w_s = d1(omega, h, ODD, 2) / phi
    out = np.empty(np.broadcast(w_s, psi).shape, dtype=np.result_type(w_s, psi_s))
    out[..., 1:-1] = w_s[..., 1:-1] + (n - 1) * (
        psi_s[..., 1:-1] / psi[..., 1:-1]
    ) * omega[..., 1:-1]
    out[..., 0] = n * w_s[..., 0]
    out[..., -1] = n * w_s[..., -1]
    if fpot is not None:
        f_s = d1(fpot, h, EVEN, 2) / phi
        out = out - f_s * omega
    return out


def _pole_even_vanishing_ratio(u, v, h):
    du = d2(u, h, EVEN, 4)
    dv = d2(v, h, EVEN, 4)
    return du[..., 0] / dv[..., 0], du[..., -1] / dv[..., -1]


def rot_fiber_ratio(h_sph, psi2, h):
    """h_sph / psi^2 with l'Hopital pole values (both vanish to second order)."""
    q0, qL = _pole_even_vanishing_ratio(h_sph, psi2, h)
    return _with_poles(h_sph, psi2, q0, qL)


def rot_hessian(phi2, psi2, h, f, profile="geometry"):
    """Covariant Hessian of an even scalar field, metric-component layout."""
    base, _ = _orders(profile)
    b = rot_basics(phi2, psi2, h, profile)
    phi, psi = b["phi"], b["psi"]
    psi_s = b["psi_s"] if profile == "geometry" else b["psi_s4"]
    f_s = d1(f, h, EVEN, base) / phi
    f_ss = (d2(f, h, EVEN, base) - d1(f, h, EVEN, base) * b["dlogphi"]) / phi2
    hxx = f_ss * phi2
    hs = psi * psi_s * f_s
    hs = hs.copy()
    hs[..., 0] = 0.0
    hs[..., -1] = 0.0
    return hxx, hs


def rot_lie_derivative(phi2, psi2, h, u):
    """Lie derivative of the metric along u d/ds (u odd, zero at poles)."""
    b = rot_basics(phi2, psi2, h)
    u_s = d1(u, h, ODD, 2) / b["phi"]
    lxx = 2.0 * phi2 * u_s
    ls = 2.0 * b["psi"] * b["psi_s"] * u
    ls = ls.copy()
    ls[..., 0] = 0.0
    ls[..., -1] = 0.0
    return lxx, ls


def rot_tensor_inner(phi2, psi2, h, n, a_xx, a_sph, b_xx, b_sph):
    """Pointwise <A, B>_g for metric-component tensors (batched, pole safe)."""
    qa = rot_fiber_ratio(a_sph, psi2, h)
    qb = rot_fiber_ratio(b_sph, psi2, h)
    return (a_xx * b_xx) / (phi2 * phi2) + (n - 1) * qa * qb


def rot_laplacian_matrix(phi2, psi2, h, n, fpot=None, profile="geometry"):
    """Dense matrix of the (weighted) scalar Laplacian on even fields.

    Assembled by applying rot_laplacian_apply to the identity, so it mirrors
    the nodal operator exactly (same stencils and pole rows).
    """
    m = phi2.shape[-1]
    return operator_matrix(
        lambda u: rot_laplacian_apply(phi2, psi2, h, n, u, fpot=fpot, profile=profile),
        m,
    )


def rot_dirichlet_matrices(phi, psi, h, n, nodal_weight):
    """Interior stiffness and mass matrices of the weighted Dirichlet form.

    a(u, v) = integral <grad u, grad v> w dV via midpoint cells, m(u, v) the
    lumped mass; -Delta_h = M^{-1} K is then exactly self-adjoint in M, which
    the eigensolves rely on.  ``nodal_weight`` carries e^{-f} and any measure
    normalization.  The pole nodes carry no measure (psi^{n-1} vanishes) and
    their half-cells hold O(h^3) energy, so they are condensed away; the
    matrices act on nodes 1 .. m-2.
    """
    m = phi.shape[-1]
    area = sphere_area(n)
    dens = area * phi * psi ** (n - 1) * nodal_weight
    mid = 0.5 * (dens[1:] + dens[:-1])
    phimid = 0.5 * (phi[1:] + phi[:-1])
    cond = mid * h / (phimid * phimid)  # cell conductance * h^2
    cond[0] = 0.0
    cond[-1] = 0.0  # pole half-cells condensed (stationary u0 = u1)
    K = np.zeros((m, m))
    idx = np.arange(m - 1)
    np.add.at(K, (idx, idx), cond)
    np.add.at(K, (idx + 1, idx + 1), cond)
    np.add.at(K, (idx, idx + 1), -cond)
    np.add.at(K, (idx + 1, idx), -cond)
    K /= h * h
    Mw = trapezoid_weights(m, h) * dens
    return K[1:-1, 1:-1], np.diag(Mw[1:-1])
