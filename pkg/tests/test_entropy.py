"""Entropy functional, constrained minimization, gradient and spectral gap."""

import math

import numpy as np
import pytest

import riccilab as rl
from riccilab.diffeos import RadialDiffeo, pullback_metric
from riccilab.entropy import MinimizeOpts
from riccilab.errors import (
    PreconditionError,
    StaleInputError,
    UnnormalizedInputError,
)
from riccilab.geometry import pointwise_inner

PARAMS = rl.FlowParams(tau=1.0, dim=3)


def conformal_w_oracle(n, c, tau):
    """W at the normalizing constant: tau R + f - n, R = n(n-1)/c."""
    fbar = math.log(c ** (n / 2.0) * rl.sphere_volume(n)) - 0.5 * n * math.log(
        4 * math.pi * tau
    )
    return tau * n * (n - 1) / c + fbar - n


class TestWFunctional:
    def test_conformal_closed_form(self):
        g = rl.round_conformal(3, 4.0)
        fbar = rl.normalizing_constant(g, PARAMS)
        w = rl.w_functional(g, rl.ScalarField(np.asarray(fbar)), PARAMS)
        # independent evaluation: W = n/2 + f - n at the soliton scale
        expect = 1.5 + math.log(2 * math.pi**2 * 8) - 1.5 * math.log(4 * math.pi) - 3.0
        assert w == pytest.approx(expect, abs=1e-12)
        assert w == pytest.approx(conformal_w_oracle(3, 4.0, 1.0), abs=1e-12)

    def test_unnormalized_rejected(self):
        g = rl.round_conformal(3, 4.0)
        fbar = rl.normalizing_constant(g, PARAMS)
        with pytest.raises(UnnormalizedInputError):
            rl.w_functional(g, rl.ScalarField(np.asarray(fbar + 0.1)), PARAMS)

    def test_rotsym_matches_conformal(self):
        g = rl.round_rotsym(3, 4.0, 200)
        fbar = math.log(8 * 2 * math.pi**2) - 1.5 * math.log(4 * math.pi)
        f = rl.ScalarField(np.full(g.grid.n_nodes, fbar))
        w = rl.w_functional(g, f, PARAMS)
        assert w == pytest.approx(conformal_w_oracle(3, 4.0, 1.0), abs=1e-5)


class TestMinimizeMu:
    def test_conformal_closed_form_minimizer(self):
        for c in (2.0, 4.0, 5.5):
            g = rl.round_conformal(3, c)
            er = rl.minimize_mu(g, PARAMS)
            fbar = math.log(c**1.5 * 2 * math.pi**2) - 1.5 * math.log(4 * math.pi)
            assert er.minimizer.const == pytest.approx(fbar, abs=1e-12)
            assert er.mu == pytest.approx(rl.mu_conformal_closed(3, c, 1.0), abs=1e-12)
            assert er.residual < 1e-12
            assert er.mass_defect < 1e-10

    def test_scaling_structure_matches_closed_form(self):
        cstar = 4.0
        for c in np.linspace(cstar / 2, 2 * cstar, 13):
            er = rl.minimize_mu(rl.round_conformal(3, float(c)), PARAMS)
            assert er.mu == pytest.approx(
                rl.mu_conformal_closed(3, float(c), 1.0), abs=1e-8
            )

    def test_round_soliton_is_critical_point(self):
        # central difference of mu over c vanishes at c* = 2 tau (n-1)
        eps = 1e-6
        up = rl.minimize_mu(rl.round_conformal(3, 4.0 + eps), PARAMS).mu
        dn = rl.minimize_mu(rl.round_conformal(3, 4.0 - eps), PARAMS).mu
        assert abs((up - dn) / (2 * eps)) < 1e-9

    def test_rotsym_bump_lowers_mu_at_matched_scale(self):
        g0 = rl.round_rotsym(3, 4.0, 200)
        er0 = rl.minimize_mu(g0, PARAMS)
        # shape bump, made scale-neutral by projecting out the g-direction
        bump = rl.bumped_rotsym(g0, 1e-2, mode=2)
        h = rl.Perturbation(
            tuple(
                b - a
                for a, b in zip(
                    rl.metric_components(g0), rl.metric_components(bump)
                )
            )
        )
        gdir = rl.metric_as_perturbation(g0)
        num = rl.l2_weighted_inner(h, gdir, g0, er0.minimizer, PARAMS)
        den = rl.l2_weighted_inner(gdir, gdir, g0, er0.minimizer, PARAMS)
        h = h - gdir * (num / den)
        g = rl.metric_plus(g0, h)
        er = rl.minimize_mu(g, PARAMS)
        assert er.residual <= 1e-6
        assert er.mu < rl.mu_conformal_closed(3, 4.0, 1.0)

    def test_minimizer_unique_near_soliton(self):
        g = rl.bumped_rotsym(rl.round_rotsym(3, 4.0, 100), 5e-3)
        rng = np.random.default_rng(5)
        mus, fs = [], []
        x = g.grid.x
        for _ in range(5):
            start = rl.ScalarField(
                rl.normalizing_constant(g, PARAMS)
                + 0.2 * np.cos(math.pi * x / g.grid.length * rng.integers(0, 3))
                * rng.normal()
            )
            er = rl.minimize_mu(g, PARAMS, MinimizeOpts(warm_start=start))
            mus.append(er.mu)
            fs.append(er.minimizer.values)
        assert max(mus) - min(mus) < 1e-8
        meas = rl.weighted_measure(g, rl.ScalarField(fs[0]), PARAMS)
        for other in fs[1:]:
            dl2 = math.sqrt(meas.integrate((other - fs[0]) ** 2))
            assert dl2 < 1e-6

    def test_diffeomorphism_invariance(self):
        g = rl.bumped_rotsym(rl.round_rotsym(3, 4.0, 200), 8e-3)
        mu0 = rl.minimize_mu(g, PARAMS).mu
        rng = np.random.default_rng(17)
        x = g.grid.x
        L = g.grid.length
        for _ in range(3):
            amp = 2e-3 * rng.uniform(0.5, 1.0)
            k = rng.integers(1, 3)
            rho = RadialDiffeo(g.grid, x + amp * np.sin(k * math.pi * x / L))
            gp = pullback_metric(g, rho)
            mup = rl.minimize_mu(gp, PARAMS).mu
            assert mup == pytest.approx(mu0, abs=1e-6)


class TestGradMu:
    def test_zero_at_round_soliton(self):
        g = rl.round_conformal(3, 4.0)
        er = rl.minimize_mu(g, PARAMS)
        gm = rl.grad_mu(g, er, PARAMS)
        assert abs(gm.tensor.comps[0][0]) < 1e-10
        assert gm.l2_dnu_norm < 1e-10

    def test_conformal_closed_form_off_soliton(self):
        g = rl.round_conformal(3, 5.0)
        er = rl.minimize_mu(g, PARAMS)
        gm = rl.grad_mu(g, er, PARAMS)
        # -tau(Ric - g/(2 tau)) = -tau((n-1) - c/2) = 0.5 per unit-round component
        assert gm.tensor.comps[0][0] == pytest.approx(0.5, abs=1e-12)

    def test_stale_minimizer_rejected(self):
        g = rl.round_conformal(3, 4.0)
        er = rl.minimize_mu(g, PARAMS)
        g2 = rl.round_conformal(3, 5.0)
        with pytest.raises(StaleInputError):
            rl.grad_mu(g2, er, PARAMS)

    def test_norm_consistency(self):
        g = rl.perturbed_berger(4.0, 2e-2)
        er = rl.minimize_mu(g, PARAMS)
        gm = rl.grad_mu(g, er, PARAMS)
        assert gm.l2_dnu_norm == pytest.approx(
            rl.l2_weighted_norm(gm.tensor, g, er.minimizer, PARAMS), abs=1e-12
        )


def random_direction(g, rng):
    # random direction tangent to the class of smooth closed profiles
    from riccilab.metrics import random_tangent_perturbation

    return random_tangent_perturbation(g, rng)


def first_variation_gap(g, rng, eps=1e-5):
    """|FD(mu; h) - <grad mu, h>_dnu| and the formula value, for a random h."""
    er = rl.minimize_mu(g, PARAMS)
    gm = rl.grad_mu(g, er, PARAMS)
    h = random_direction(g, rng)
    start = er.minimizer if isinstance(g, rl.RotSym) else None
    opts = MinimizeOpts(warm_start=start)
    mu_p = rl.minimize_mu(rl.metric_plus(g, h, eps), PARAMS, opts).mu
    mu_m = rl.minimize_mu(rl.metric_plus(g, h, -eps), PARAMS, opts).mu
    fd = (mu_p - mu_m) / (2 * eps)
    formula = rl.l2_weighted_inner(gm.tensor, h, g, er.minimizer, PARAMS)
    return abs(fd - formula), formula


class TestFirstVariation:
    def test_conformal(self):
        rng = np.random.default_rng(1)
        g = rl.round_conformal(3, 4.6)
        for _ in range(20):
            gap, formula = first_variation_gap(g, rng)
            assert gap <= 1e-5 * (1.0 + abs(formula))

    def test_berger(self):
        rng = np.random.default_rng(2)
        g = rl.perturbed_berger(4.0, 3e-2)
        for _ in range(20):
            gap, formula = first_variation_gap(g, rng)
            assert gap <= 1e-5 * (1.0 + abs(formula))

    def test_rotsym(self):
        rng = np.random.default_rng(3)
        g = rl.bumped_rotsym(rl.round_rotsym(3, 4.0, 100), 5e-3)
        for _ in range(5):
            gap, formula = first_variation_gap(g, rng)
            assert gap <= 1e-5 * (1.0 + abs(formula))


class TestSpectralGap:
    def test_conformal_round_closed_form(self):
        g = rl.round_conformal(3, 4.0)
        er = rl.minimize_mu(g, PARAMS)
        lam = rl.weighted_spectral_gap(g, er.minimizer, PARAMS)
        assert lam == pytest.approx(0.75, abs=1e-6)
        assert lam > 0.5  # strictly above 1/(2 tau)

    def test_rotsym_round_eigensolve(self):
        g = rl.round_rotsym(3, 4.0, 200)
        er = rl.minimize_mu(g, PARAMS)
        lam = rl.weighted_spectral_gap(g, er.minimizer, PARAMS)
        assert lam == pytest.approx(0.75, abs=1e-3)
        assert lam > 0.5

    def test_non_soliton_rejected(self):
        g = rl.round_conformal(3, 5.0)
        er = rl.minimize_mu(g, PARAMS)
        with pytest.raises(PreconditionError):
            rl.weighted_spectral_gap(g, er.minimizer, PARAMS)
