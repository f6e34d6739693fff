import numpy as np
import pytest

from hamesc.certify import (CertifyParams, asymptotic_data, certify, certify_point,
                            default_T_max, escape_radius, estimate_mourre, mourre_quantity)
from hamesc.errors import DomainError, InsufficientData, UsageError
from hamesc.flow import integrate
from hamesc.symbols import PhasePoint, make_free, sphere_points

from conftest import pt

DIAG = np.array([1.0, 1.0]) / np.sqrt(2)


def mourre_by_differences(sym, x, xi, h=1e-5):
    """``{p, 2 x . d_xi p}`` with the inner function differentiated numerically."""
    def f(x_, xi_):
        return 2.0 * np.sum(x_ * sym.dxi(x_, xi_, "principal"), axis=-1)

    n = x.shape[-1]
    e = np.eye(n)
    fx = np.stack([(f(x + h * e[j], xi) - f(x - h * e[j], xi)) / (2 * h) for j in range(n)], -1)
    fxi = np.stack([(f(x, xi + h * e[j]) - f(x, xi - h * e[j])) / (2 * h) for j in range(n)], -1)
    return (np.sum(sym.dxi(x, xi, "principal") * fx, axis=-1)
            - np.sum(sym.dx(x, xi, "principal") * fxi, axis=-1))


class TestMourre:
    @pytest.mark.parametrize("name", ["free", "minkowski"])
    def test_constant_coefficients_give_eight(self, symbols_2d, name):
        assert estimate_mourre(symbols_2d[name]).M == pytest.approx(8.0, rel=1e-14)

    def test_three_dimensional_minkowski(self, mink3):
        assert estimate_mourre(mink3).M == pytest.approx(8.0, rel=1e-14)

    def test_quantity_matches_bracket_differences(self, bump):
        x = 1.7 * sphere_points(2, 12)
        xi = sphere_points(2, 12)[::-1]
        exact = mourre_quantity(bump, x, xi)
        assert np.allclose(exact, mourre_by_differences(bump, x, xi), atol=1e-6)

    def test_bump_brute_force(self, bump):
        mc = estimate_mourre(bump)
        assert 0 < mc.M <= 8.0
        dirs, XI = sphere_points(2, 48), sphere_points(2, 96)
        radii = [r for r in mc.shell_minima if r >= mc.R0]
        worst = min(float(np.min(mourre_by_differences(bump, np.repeat(r * dirs, 96, 0),
                                                       np.tile(XI, (48, 1)))))
                    for r in radii)
        assert mc.M == pytest.approx(worst, abs=1e-6)
        assert bump.eval(mc.witness.x, mc.witness.xi) is not None

    def test_monotone_in_R0(self, bump):
        a = estimate_mourre(bump, radii=(1.25, 2.0, 4.0, 8.0))
        b = estimate_mourre(bump, radii=(2.0, 4.0, 8.0))
        assert b.R0 == 2.0 and b.M >= a.M

    @pytest.mark.parametrize("lam", [0.5, 4.0])
    def test_homogeneity_in_xi(self, bump, lam):
        x = 2.0 * sphere_points(2, 16)
        xi = sphere_points(2, 16)
        base = mourre_quantity(bump, x, xi)
        scaled = mourre_quantity(bump, x, lam * xi) / lam ** (2 * (bump.m - 1))
        assert np.allclose(scaled, base, rtol=1e-12, atol=1e-14)

    def test_safety_factor(self, free2):
        assert estimate_mourre(free2, safety_factor=0.5).M == pytest.approx(4.0)
        with pytest.raises(UsageError):
            estimate_mourre(free2, safety_factor=1.5)
        with pytest.raises(UsageError):
            estimate_mourre(free2, radii=(0.5, 2.0))


class TestEscapeRadius:
    def test_zero_C0(self):
        assert escape_radius(0.0, 2, 1.0, 8.0, 1.25) == 1.25

    def test_formula(self):
        assert escape_radius(1.0, 2, 1.0, 8.0, 1.0) == pytest.approx(2.0, rel=1e-14)
        assert escape_radius(1.0, 3, 1.0, 8.0, 1.0) == pytest.approx(4.0, rel=1e-14)

    def test_errors(self):
        with pytest.raises(DomainError):
            escape_radius(1.0, 2, 1.0, 0.0, 1.0)
        with pytest.raises(UsageError):
            escape_radius(-1.0, 2, 1.0, 8.0, 1.0)


class TestCertifyPoint:
    def test_minkowski_straight_line(self, mink2):
        c = certify_point(mink2, pt([0, 0], DIAG), 3.0, 200.0)
        assert c.status == "escaped"
        # |y(t)| = 2 t |xi| with |xi| = 1
        assert c.t_exit == pytest.approx(1.5, abs=1e-9)
        assert c.band[1] - c.band[0] <= 1e-12
        assert c.v_plus == pytest.approx(2 * np.array([DIAG[0], -DIAG[1]]), abs=1e-12)

    def test_exit_at_start(self, mink2):
        R1 = 2.0
        c = certify_point(mink2, pt(2 * R1 * np.array([DIAG[0], -DIAG[1]]), DIAG), R1, 100.0)
        assert c.status == "escaped" and c.t_exit == 0.0

    def test_bump_band(self, bump):
        c = certify_point(bump, pt([0, 0], DIAG), 1.25, 500.0)
        assert c.status == "escaped"
        assert c.band[1] / c.band[0] <= 2.0
        lo, hi = c.band_limits
        assert lo <= c.band[0] and c.band[1] <= hi
        # C1, C2 come from step nodes over the whole run, the band from a denser tail sample
        assert c.C1 <= c.band[0] ** (bump.m - 1) * (1 + 1e-12)
        assert c.C2 >= c.band[1] ** (bump.m - 1) * (1 - 1e-12)
        assert c.monotone_violation == 0.0

    def test_backward_is_forward_with_reversed_momentum(self, bump):
        x = np.array([0.4, -0.3])
        b = certify_point(bump, pt(x, DIAG), 1.25, 200.0, "backward")
        f = certify_point(bump, pt(x, -DIAG), 1.25, 200.0, "forward")
        assert b.status == f.status == "escaped"
        assert b.t_exit == pytest.approx(f.t_exit, rel=1e-8)
        assert b.band == pytest.approx(f.band, rel=1e-8)

    def test_undecided_when_horizon_short(self, mink2):
        c = certify_point(mink2, pt([0, 0], DIAG), 100.0, 1.0)
        assert c.status == "undecided" and c.t_exit is None

    def test_errors(self, mink2):
        with pytest.raises(UsageError):
            certify_point(mink2, pt([0, 0], DIAG), 1.0, 10.0, "sideways")
        with pytest.raises(UsageError):
            certify_point(mink2, pt([0, 0], DIAG), 1.0, 0.0)


class TestAsymptotics:
    def test_free_momentum_is_constant(self):
        sym = make_free(2)
        tr = integrate(sym, pt([0.5, 0], [0.6, 0.8]), 400.0)
        eta, v, res = asymptotic_data(sym, tr)
        assert eta.tolist() == [0.6, 0.8]
        assert res["eta"]["max_deviation"] == 0.0 and res["eta"]["below_floor"]

    def test_minkowski_velocity(self, mink2):
        tr = integrate(mink2, pt([0, 0], [1, 1]), 400.0)
        _, v, _ = asymptotic_data(mink2, tr)
        assert v == pytest.approx([2.0, -2.0], abs=1e-14)

    def test_bump_decay_exponent(self, bump):
        tr = integrate(bump, pt([0.2, 0.1], DIAG), 4000.0)
        _, _, res = asymptotic_data(bump, tr, t_exit=1.0)
        assert res["eta"]["exponent"] >= bump.mu - 0.2

    def test_short_tail(self, mink2):
        tr = integrate(mink2, pt([0, 0], [1, 1]), 10.0)
        with pytest.raises(InsufficientData):
            asymptotic_data(mink2, tr)


class TestCertify:
    def test_minkowski(self, mink2):
        cert = certify(mink2, CertifyParams(count=64))
        assert cert.status == "certified" and not cert.vacuous
        assert cert.summary["n_seeds"] == 64
        assert cert.summary["escaped"] == 128
        assert cert.R1 == cert.mourre.R0

    def test_free_is_vacuous(self, free2):
        cert = certify(free2, CertifyParams(count=8))
        assert cert.status == "certified" and cert.vacuous
        assert cert.seeds == [] and cert.sample["flag"]

    def test_bump(self, bump):
        cert = certify(bump, CertifyParams(count=16))
        assert cert.status == "certified"
        assert cert.summary["band_violations"] == 0
        assert all(s.band_limits[0] <= s.band[0] and s.band[1] <= s.band_limits[1]
                   for s in cert.seeds)

    def test_bump_stable_under_longer_horizon(self, bump):
        a = certify(bump, CertifyParams(count=8))
        T = 2 * max(default_T_max(a.nondeg_C, a.R1, s.seed) for s in a.seeds)
        b = certify(bump, CertifyParams(count=8, T_max=T))
        assert b.status == a.status == "certified"
        assert [s.t_exit for s in a.seeds] == pytest.approx([s.t_exit for s in b.seeds],
                                                             rel=1e-6)

    def test_serialises(self, mink2):
        d = certify(mink2, CertifyParams(count=2)).to_dict()
        assert d["status"] == "certified" and len(d["seeds"]) == 4
        assert len(d["symbol_hash"]) == 64
