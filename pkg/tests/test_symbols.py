import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hamesc.errors import SymbolRejected, UsageError
from hamesc.symbols import (Constant, Gaussian, JapanesePower, Sum, ValidationLattice,
                            eval_symbol, fd_grad, hamiltonian_field, make_free,
                            make_klein_gordon, make_polynomial, minkowski_inverse,
                            multi_indices, profile, validate)

from conftest import pt

coords = st.floats(-5.0, 5.0, allow_nan=False)
vec2 = st.tuples(coords, coords).map(np.array)
nonzero2 = vec2.filter(lambda v: np.linalg.norm(v) > 1e-2)


def g11_bump(amplitude=1.0):
    g = minkowski_inverse(2)
    g[0][0] = Sum([Constant(1.0), Gaussian(amplitude, 1.0)])
    return make_klein_gordon(g)


class TestEvaluation:
    def test_free_value(self, free2):
        assert eval_symbol(free2, pt([0, 0], [3, 4])) == 25.0

    def test_minkowski_null_point(self, mink2):
        assert eval_symbol(mink2, pt([0, 0], [1, 1])) == 0.0

    def test_potential_bump_adds_one(self, potential_bump):
        assert eval_symbol(potential_bump, pt([0, 0], [1, 1])) == pytest.approx(1.0, abs=1e-15)

    def test_parts(self, potential_bump):
        p = pt([0.3, -0.4], [2.0, 1.0])
        v = np.exp(-0.25)
        assert eval_symbol(potential_bump, p, "principal") == pytest.approx(3.0)
        assert eval_symbol(potential_bump, p, "free") == pytest.approx(3.0)
        assert eval_symbol(potential_bump, p, "lower") == pytest.approx(v)
        assert eval_symbol(potential_bump, p) == pytest.approx(3.0 + v)

    def test_unknown_part(self, free2):
        with pytest.raises(UsageError):
            eval_symbol(free2, pt([0, 0], [1, 0]), "bogus")

    def test_vectorised_shape(self, bump):
        x = np.zeros((3, 4, 2))
        xi = np.ones((3, 4, 2))
        assert bump.eval(x, xi).shape == (3, 4)
        assert bump.dx_dxi(x, xi).shape == (3, 4, 2, 2)

    def test_phase_point_validation(self):
        with pytest.raises(UsageError):
            pt([0, 0], [1, 0, 0])
        with pytest.raises(UsageError):
            pt([np.nan, 0], [1, 0])


class TestHamiltonianField:
    def test_free(self, free2):
        dx, dxi = hamiltonian_field(free2, pt([0, 0], [1, 0]))
        assert dx.tolist() == [2.0, 0.0] and dxi.tolist() == [0.0, 0.0]

    def test_minkowski(self, mink2):
        dx, dxi = hamiltonian_field(mink2, pt([0, 0], [1, 1]))
        assert dx.tolist() == [2.0, -2.0] and np.all(dxi == 0)

    def test_metric_bump_at_origin(self):
        dx, dxi = hamiltonian_field(g11_bump(), pt([0, 0], [1, 0]))
        assert dx == pytest.approx([4.0, 0.0], abs=1e-15)
        assert dxi == pytest.approx([0.0, 0.0], abs=1e-15)

    def test_bad_part(self, free2):
        with pytest.raises(UsageError):
            hamiltonian_field(free2, pt([0, 0], [1, 0]), "lower")

    @given(vec2, nonzero2)
    def test_fused_field_matches_evaluators(self, x, xi):
        sym = g11_bump(0.3)
        v, f = sym.field(x, xi)
        assert np.allclose(v, sym.dxi(x, xi, "principal"), rtol=1e-13, atol=1e-13)
        assert np.allclose(f, sym.dx(x, xi, "principal"), rtol=1e-13, atol=1e-13)


class TestKleinGordon:
    def test_minkowski_coefficients(self, mink2):
        got = {a: float(f.value(np.zeros((1, 2)))[0]) for a, f in mink2.coeffs.items()}
        assert got == {(2, 0): 1.0, (0, 2): -1.0}
        assert mink2.limits == {(2, 0): 1.0, (0, 2): -1.0}

    def test_vector_potential_shift(self):
        sym = make_klein_gordon(minkowski_inverse(2), A=[1.0, 0.0])
        assert eval_symbol(sym, pt([0.7, -2.0], [1, 0])) == 0.0
        assert eval_symbol(sym, pt([0, 0], [3, 2])) == pytest.approx((3 - 1) ** 2 - 4)

    def test_metric_bump_coefficient(self):
        assert g11_bump().coeffs[(2, 0)].value(np.zeros((1, 2)))[0] == 2.0

    def test_asymmetric_metric_rejected(self):
        g = minkowski_inverse(2)
        g[0][1] = Constant(0.1)
        with pytest.raises(UsageError):
            make_klein_gordon(g)

    def test_off_diagonal_expansion(self):
        g = minkowski_inverse(2)
        g[0][1] = g[1][0] = Constant(0.25)
        sym = make_klein_gordon(g)
        xi = np.array([1.5, -0.5])
        assert sym.eval(np.zeros(2), xi) == pytest.approx(1.5**2 - 0.25 + 2 * 0.25 * 1.5 * -0.5)


class TestInvariants:
    @pytest.mark.parametrize("name", ["free", "minkowski", "bump"])
    @given(x=vec2, xi=nonzero2)
    def test_euler_identity(self, symbols_2d, name, x, xi):
        sym = symbols_2d[name]
        lhs = xi @ sym.dxi(x, xi, "principal")
        rhs = sym.m * sym.eval(x, xi, "principal")
        scale = max(1.0, abs(rhs), float(np.linalg.norm(xi)) ** sym.m)
        assert abs(lhs - rhs) <= 1e-10 * scale

    @given(x=vec2, xi=nonzero2)
    def test_gradients_match_finite_differences(self, bump, x, xi):
        for part in ("full", "principal"):
            gx = fd_grad(lambda y: bump.eval(y, np.broadcast_to(xi, y.shape), part), x)
            gxi = fd_grad(lambda e: bump.eval(np.broadcast_to(x, e.shape), e, part), xi)
            sx = max(1e-8, float(np.max(np.abs(bump.dx(x, xi, part)))))
            sxi = max(1.0, float(np.max(np.abs(bump.dxi(x, xi, part)))))
            assert np.max(np.abs(gx - bump.dx(x, xi, part))) <= 1e-6 * max(sx, 1.0)
            assert np.max(np.abs(gxi - bump.dxi(x, xi, part))) <= 1e-6 * sxi

    @given(x=vec2, xi=vec2)
    def test_splitting_identity(self, potential_bump, x, xi):
        s = potential_bump
        full = s.eval(x, xi)
        scale = max(1.0, abs(full))
        assert abs(full - (s.eval(x, xi, "free") + s.q(x, xi))) <= 1e-12 * scale
        assert abs(full - (s.eval(x, xi, "principal") + s.V(x, xi))) <= 1e-12 * scale
        assert np.isrealobj(full)

    def test_second_derivatives_by_differences(self, bump):
        x = np.array([0.4, -0.9])
        xi = np.array([1.2, 0.7])
        h = 1e-5
        e = np.eye(2)
        mixed = np.stack([(bump.dxi(x + h * e[k], xi) - bump.dxi(x - h * e[k], xi)) / (2 * h)
                          for k in range(2)])
        assert np.allclose(mixed, bump.dx_dxi(x, xi), atol=1e-8)
        hxx = np.stack([(bump.dx(x + h * e[k], xi) - bump.dx(x - h * e[k], xi)) / (2 * h)
                        for k in range(2)])
        assert np.allclose(hxx, bump.dx_dx(x, xi), atol=1e-8)
        assert np.allclose(bump.dxi_dxi(x, xi), np.diag([2 * (1 + 0.1 * np.exp(-1.0 * x @ x)),
                                                          -2.0]))


class TestCoefficients:
    def test_multi_indices_grlex(self):
        assert multi_indices(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        assert multi_indices(2, 2, min_order=2) == [(2, 0), (1, 1), (0, 2)]

    def test_symbol_keys_sorted(self):
        sym = make_polynomial(2, 2, {(0, 2): (1.0, 1.0), (1, 0): (2.0, 0.0),
                                     (2, 0): (1.0, 1.0)})
        assert sym.alphas == [(1, 0), (2, 0), (0, 2)]

    def test_gaussian_derivatives(self):
        g = Gaussian(0.7, 1.3, center=[0.2, -0.1])
        x = np.array([[0.5, 0.4], [-1.0, 2.0]])
        assert np.allclose(g.grad(x), fd_grad(g.value, x), rtol=1e-7, atol=1e-10)
        assert g.value(np.array([[0.2, -0.1]]))[0] == 0.7

    def test_japanese_power(self):
        f = JapanesePower(2.0, 1.0)
        x = np.array([[3.0, 4.0]])
        assert f.value(x)[0] == pytest.approx(2.0 / np.sqrt(26.0))
        assert np.allclose(f.grad(x), fd_grad(f.value, x), rtol=1e-7)

    def test_profile_errors(self):
        with pytest.raises(UsageError):
            profile({"profile": "sinc"})
        with pytest.raises(UsageError):
            profile({"profile": "constant", "width": 1.0})

    def test_bad_symbol_order(self):
        with pytest.raises(UsageError):
            make_polynomial(1, 1, {(1,): (1.0, 1.0)})
        with pytest.raises(UsageError):
            make_polynomial(2, 1, {(1,): (1.0, 1.0)})


class TestValidate:
    @pytest.mark.parametrize("name", ["free", "minkowski"])
    def test_constant_coefficient_constants(self, symbols_2d, name):
        rep = validate(symbols_2d[name])
        assert rep.nondeg_C == pytest.approx(2.0, rel=1e-14)
        assert rep.C0 == 0.0
        assert rep.gradient_check["passed"]

    def test_bump_C0_matches_closed_form(self, bump):
        lat = ValidationLattice()
        rep = validate(bump, lat)
        X = lat.x_points(2)
        XI = lat.xi_points(2)
        r = np.linalg.norm(X, axis=-1)[:, None]
        # |d_x p_m| |x|^2 / |xi|^2 with p_m = (1 + 0.1 e^{-|x|^2}) xi_1^2 - xi_2^2
        ratio = 0.2 * r**3 * np.exp(-r**2) * XI[None, :, 0] ** 2
        assert rep.C0 == pytest.approx(float(ratio.max()), rel=1e-12)
        assert 0 < rep.C0 <= 0.2 * 1.5**1.5 * np.exp(-1.5)
        assert rep.decay_by_alpha["2,0"][0] > 0

    def test_rejects_degenerate_symbol_with_witness(self):
        # xi_1^2 + xi_1 xi_2 + xi_2^2 / 4 = (xi_1 + xi_2 / 2)^2 has a vanishing gradient
        sym = make_polynomial(2, 2, {(2, 0): (1.0, 1.0), (1, 1): (1.0, 1.0),
                                     (0, 2): (0.25, 0.25)})
        with pytest.raises(SymbolRejected) as exc:
            validate(sym, ValidationLattice(n_xi=64, nondeg_cap=10.0))
        w = exc.value.witness
        assert set(w) >= {"x", "xi", "ratio"} and w["ratio"] > 10.0
