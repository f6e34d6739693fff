import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from hamesc.smooth import CutoffPair, smooth_step

S = smooth_step()
TOP = 0.125


def mollifier(s):
    g = s * (TOP - s)
    return np.exp(256.0 - 1.0 / g) if g > 0 else 0.0


def rho_by_quadrature(t):
    total = quad(mollifier, 0.0, TOP, epsabs=0, epsrel=1e-13, limit=200)[0]
    part = quad(mollifier, 0.0, min(max(t, 0.0), TOP), epsabs=0, epsrel=1e-13, limit=200)[0]
    return part / total


class TestRho:
    def test_endpoints(self):
        assert S.rho(0.0) == 0.0
        assert S.rho(-3.0) == 0.0
        assert S.rho(TOP) == 1.0
        assert S.rho(5.0) == 1.0

    def test_midpoint_by_symmetry(self):
        # the mollifier is symmetric about 1/16
        assert S.rho(TOP / 2) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("t", [0.01, 0.03, 0.05, 0.0625, 0.08, 0.1, 0.12])
    def test_matches_adaptive_quadrature(self, t):
        assert S.rho(t) == pytest.approx(rho_by_quadrature(t), abs=1e-10)

    def test_closed_form_derivative_matches_spline(self):
        t = np.linspace(0.0, TOP, 2001)
        scale = np.max(S.drho(t))
        assert np.max(np.abs(S.drho(t) - S.spline_drho(t))) <= 1e-8 * scale

    def test_derivative_matches_finite_difference(self):
        t = np.linspace(0.02, 0.105, 50)
        h = 1e-6
        fd = (S.rho(t + h) - S.rho(t - h)) / (2 * h)
        assert np.allclose(fd, S.drho(t), rtol=1e-5, atol=1e-6)

    @given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    def test_monotone_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert 0.0 <= S.rho(lo) <= S.rho(hi) <= 1.0
        assert S.drho(a) >= 0.0


class TestShiftedFamily:
    @given(st.floats(-1.0, 1.0), st.floats(0.51, 0.87))
    def test_partition_of_unity(self, t, delta):
        total = S.rho_minus(t, delta) + S.rho_zero(t, delta) + S.rho_plus(t, delta)
        assert abs(total - 1.0) <= 1e-14

    @given(st.floats(-1.0, 1.0), st.floats(0.51, 0.87))
    def test_derivatives_sum_to_zero(self, t, delta):
        total = S.drho_minus(t, delta) + S.drho_zero(t, delta) + S.drho_plus(t, delta)
        assert abs(total) <= 1e-12 * max(1.0, abs(S.drho_plus(t, delta)))

    def test_regimes(self):
        d = 0.6
        assert S.rho_plus(1.0, d) == 1.0 and S.rho_minus(1.0, d) == 0.0
        assert S.rho_minus(-1.0, d) == 1.0 and S.rho_plus(-1.0, d) == 0.0
        assert S.rho_zero(0.0, d) == 1.0


class TestCutoffs:
    def test_chi_values(self):
        assert S.chi(1.0) == 1.0
        assert S.chi(2.0) == 0.0
        assert S.chi(1.5) == pytest.approx(0.5, abs=1e-12)

    @given(st.floats(0.0, 5.0))
    def test_chi_plus_chibar(self, t):
        assert S.chi(t) + S.chibar(t) == pytest.approx(1.0, abs=1e-15)

    def test_chi_derivative_support(self):
        t = np.linspace(0.0, 3.0, 3001)
        d = S.dchibar(t)
        assert np.all(d >= 0)
        assert np.all(d[(t <= 1.0) | (t >= 2.0)] == 0)

    def test_psi_profile(self):
        assert S.Psi(0.5) == 1.0
        assert S.Psi(1.0) == 0.0
        assert S.Psi(0.75) == pytest.approx(0.5, abs=1e-12)
        r = np.linspace(0.0, 1.5, 1501)
        assert np.all(S.dPsi(r) <= 0)
        inner = (r > 0.5) & (r < 1.0)
        # positive on (1/2, 1) mathematically; the mollifier's flat ends underflow in double
        assert np.all(S.Psi(r[inner]) >= 0)
        mid = S.Psi(r[(r >= 0.7) & (r <= 0.8)])
        assert np.all((mid > 0) & (mid < 1))

    def test_psi_saturates_near_the_ends(self):
        # rho(0.025) is about 3.5e-65, so Psi(0.6) rounds to 1
        assert S.Psi(0.6) == 1.0
        assert 0.0 < S.Psi(0.7) < 1.0

    def test_cutoff_pair_regions(self):
        c = CutoffPair(2.0, 0.5)
        x = np.array([[3.0, 0.0], [5.0, 0.0], [1.0, 0.0]])
        xi = np.array([[1.5, 0.0], [0.7, 0.0], [1.0, 0.0]])
        assert c.in_omega1(x, xi).tolist() == [True, False, False]
        assert c.in_omega2(x, xi).tolist() == [False, True, False]
        assert c.chi_M(np.array([1.0, 0.0])) == 1.0
        assert c.chibar_nu(np.array([2.0, 0.0])) == 1.0

    def test_cutoff_pair_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            CutoffPair(0.0, 1.0)
