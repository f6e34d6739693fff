import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamesc.brackets import bracket_fd, poisson_bracket_fd, symbol_function
from hamesc.errors import DomainError, UsageError
from hamesc.rng import make_rng
from hamesc.weights import (EscapeWeightParams, b_values, bracket_p0_b_closed_form,
                            bracket_p0_b_terms, delta3, eta_coord, radcl_pipeline,
                            sample_radcl_points, sign_lemma_residual, verify_radcl_bound,
                            weight_b)

from conftest import pt

P = EscapeWeightParams(delta=0.6, gamma=0.2, k=0.0, M=2.0, nu=0.5)


def rng_factory(stream):
    return lambda key: make_rng(0, stream, key if isinstance(key, int) else 10**6)


class TestEta:
    def test_orthogonal(self, free2):
        assert eta_coord(free2, pt([1, 0], [0, 3])) == 0.0

    def test_parallel(self, free2):
        assert eta_coord(free2, pt([2, 0], [5, 0])) == 1.0

    def test_diagonal(self, free2):
        assert eta_coord(free2, pt([1, 1], [1, 0])) == pytest.approx(2**-0.5, abs=1e-15)

    def test_domain(self, free2):
        with pytest.raises(DomainError):
            eta_coord(free2, pt([0, 0], [1, 0]))
        with pytest.raises(DomainError):
            eta_coord(free2, pt([1, 0], [0, 0]))


class TestWeight:
    def test_middle_regime(self, free2):
        assert weight_b(free2, P, pt([10, 0], [0, 3])) == 1.0

    def test_outgoing(self, free2):
        assert weight_b(free2, P, pt([10, 0], [5, 0])) == pytest.approx(
            10**-0.2 * np.exp(-0.2), rel=1e-14)

    def test_incoming(self, free2):
        assert weight_b(free2, P, pt([10, 0], [-5, 0])) == pytest.approx(
            10**0.2 * np.exp(0.2), rel=1e-14)

    def test_cutoffs_short_circuit_origin(self, free2):
        assert weight_b(free2, P, pt([0, 0], [1, 0])) == 0.0
        assert weight_b(free2, P, pt([10, 0], [0, 0])) == 0.0

    @given(st.floats(-30, 30), st.floats(-30, 30), st.floats(-5, 5), st.floats(-5, 5))
    def test_nonnegative(self, x1, x2, k1, k2):
        from hamesc.symbols import make_free
        assert b_values(make_free(2), P, np.array([x1, x2]), np.array([k1, k2])) >= 0

    def test_params(self):
        with pytest.raises(UsageError):
            EscapeWeightParams(delta=0.9)
        with pytest.raises(UsageError):
            EscapeWeightParams(gamma=0.3)
        with pytest.raises(UsageError):
            EscapeWeightParams(gamma=0.2).check_mu(0.3)


class TestDelta3:
    def test_values(self):
        assert delta3(0.6) == 0.275
        assert delta3(0.75) == 0.125

    def test_limit_at_upper_end(self):
        assert 0 < delta3(0.874) <= 0.001 + 1e-15

    def test_domain(self):
        with pytest.raises(DomainError):
            delta3(0.5)
        with pytest.raises(DomainError):
            delta3(0.875)

    @given(st.floats(0.5, 0.875, exclude_min=True, exclude_max=True))
    def test_positive(self, d):
        assert delta3(d) > 0

    def test_derived(self):
        assert P.delta4 == pytest.approx(0.055, rel=1e-15)


class TestBrackets:
    def test_canonical_pair(self):
        f = lambda x, xi: xi[..., 0]
        g = lambda x, xi: x[..., 0]
        assert poisson_bracket_fd(f, g, pt([0.3, 4.0], [-2.0, 1.0])) == pytest.approx(1.0)

    def test_free_with_radius(self, free2):
        g = lambda x, xi: np.sum(x * x, axis=-1)
        val = poisson_bracket_fd(symbol_function(free2), g, pt([1, 0], [2, 0]))
        assert val == pytest.approx(8.0, rel=1e-10)

    def test_free_with_eta(self, free2):
        from hamesc.weights import eta_values
        g = lambda x, xi: eta_values(free2, x, xi)
        val = poisson_bracket_fd(symbol_function(free2), g, pt([1, 1], [1, 0]))
        assert val == pytest.approx(2 / np.sqrt(2) * 0.5, abs=1e-6)

    def b_fn(self, sym):
        return lambda x, xi: b_values(sym, P, x, xi)

    def test_middle_regime_matches_fd(self, free2):
        p = pt([10, 0], [0.3, 3])
        cf = bracket_p0_b_closed_form(free2, P, p)
        fd = poisson_bracket_fd(symbol_function(free2, "free"), self.b_fn(free2), p)
        assert cf["r0"] == 0.0
        assert cf["total"] == pytest.approx(fd, abs=1e-6)

    def test_outgoing_plateau_is_nonpositive(self, free2):
        p = pt([10, 0.5], [5, 0])
        cf = bracket_p0_b_closed_form(free2, P, p)
        assert cf["total"] <= 0 and cf["r0"] == 0.0
        b = weight_b(free2, P, p)
        assert cf["total"] <= -P.delta4 * 10 / np.linalg.norm(p.x) * b
        fd = poisson_bracket_fd(symbol_function(free2, "free"), self.b_fn(free2), p)
        assert cf["total"] == pytest.approx(fd, abs=1e-6)

    def test_cutoff_transition(self, free2):
        p = pt([3, 0.4], [2, 0.5])
        cf = bracket_p0_b_closed_form(free2, P, p)
        assert cf["r0"] != 0.0
        fd = poisson_bracket_fd(symbol_function(free2, "free"), self.b_fn(free2), p)
        assert cf["total"] == pytest.approx(fd, abs=1e-6)

    @pytest.mark.parametrize("name", ["free", "minkowski"])
    def test_closed_form_vs_fd_sampled(self, symbols_2d, name):
        sym = symbols_2d[name]
        x, xi = sample_radcl_points(2, P, 400, make_rng(5, "radcl_sample"))
        terms = bracket_p0_b_terms(sym, P, x, xi)
        fd = bracket_fd(symbol_function(sym, "free"), self.b_fn(sym), x, xi)
        scale = np.maximum(1.0, np.abs(fd))
        assert np.max(np.abs(terms.total - fd) / scale) <= 1e-6

    @pytest.mark.parametrize("name", ["free", "minkowski"])
    def test_sign_lemma(self, symbols_2d, name):
        sym = symbols_2d[name]
        x, xi = sample_radcl_points(2, P, 2000, make_rng(6, "radcl_sample"))
        res = sign_lemma_residual(sym, P, x, xi)
        assert np.max(res) <= 1e-12


class TestRadialBound:
    @pytest.mark.parametrize("name", ["free", "minkowski"])
    def test_constant_coefficients(self, symbols_2d, name):
        sym = symbols_2d[name]
        x, xi = sample_radcl_points(2, P, 4000, make_rng(0, "radcl_sample"))
        rep = verify_radcl_bound(sym, P, x, xi)
        assert rep.passed and rep.n_support > 0
        # the pure p_0 inequality leaves a second delta_4 of room
        assert rep.min_relative_margin >= P.delta4 * (1 - 1e-6)

    def test_three_dimensional(self, mink3):
        x, xi = sample_radcl_points(3, P, 3000, make_rng(1, "radcl_sample"))
        rep = verify_radcl_bound(mink3, P, x, xi)
        assert rep.passed and rep.min_relative_margin >= P.delta4 * (1 - 1e-6)

    def test_bump_pipeline(self, bump):
        rep = radcl_pipeline(bump, P, rng_factory("radcl_sample"), count=10_000)
        assert rep.passed and rep.smallness["holds"]
        assert rep.n_checked + rep.n_skipped_omega == rep.n_points == 10_000
        assert rep.margins.shape == (rep.n_checked,)

    def test_empty_sample(self, free2):
        with pytest.raises(UsageError):
            verify_radcl_bound(free2, P, np.zeros((0, 2)), np.zeros((0, 2)))

    @settings(max_examples=10)
    @given(st.integers(0, 2**32))
    def test_property_free(self, seed):
        from hamesc.symbols import make_free
        x, xi = sample_radcl_points(2, P, 300, make_rng(seed, "radcl_sample"))
        assert verify_radcl_bound(make_free(2), P, x, xi).passed
