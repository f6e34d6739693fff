import numpy as np
import pytest

from hamesc.errors import UsageError
from hamesc.radial import (RadialExperiment, boundary_mass, radial_estimate_experiment,
                           tilde_params, wave_packets)
from hamesc.rng import make_rng
from hamesc.symbols import make_free
from hamesc.weights import EscapeWeightParams
from hamesc.weyl import Grid


@pytest.fixture(scope="module")
def estimates():
    out = {}
    for N in (256, 512):
        out[N] = radial_estimate_experiment(Grid(40.0, N), trials=64,
                                            rng=make_rng(0, "trial_vectors"))
    return out


class TestEstimate:
    def test_stable_across_im_z(self, estimates):
        rep = estimates[256]
        assert all(np.isfinite(v) and v > 0 for v in rep.C_hat.values())
        assert rep.z_spread <= 2.0
        assert rep.n_skipped == 0 and rep.boundary_ok

    def test_refinement(self, estimates):
        a, b = estimates[256].C_hat, estimates[512].C_hat
        assert max(abs(b[z] - a[z]) / a[z] for z in a) <= 0.2

    def test_ratios_bounded_by_fit(self, estimates):
        rep = estimates[256]
        for z, r in rep.ratios.items():
            assert r.shape == (64,) and np.max(r) == rep.C_hat[z]

    def test_deterministic(self):
        g = Grid(40.0, 128)
        a = radial_estimate_experiment(g, trials=8, rng=make_rng(3, "trial_vectors"))
        b = radial_estimate_experiment(g, trials=8, rng=make_rng(3, "trial_vectors"))
        assert a.to_dict() == b.to_dict()

    def test_vector_where_weight_vanishes(self):
        # a packet inside |x| < M at frequencies below nu
        g = Grid(40.0, 256)
        p = EscapeWeightParams(M=16.0, nu=4.0)
        phi = np.exp(-g.x**2 / 8.0).astype(complex)[:, None]
        lhs, terms = RadialExperiment(g, p=p).sides(phi, 1j)
        assert lhs[0] <= 1e-20 and terms.sum() > 0.1

    def test_degenerate_trial_skipped(self):
        g = Grid(40.0, 128)
        phi = np.zeros((128, 2), dtype=complex)
        phi[:, 1] = np.exp(-g.x**2)
        rep = radial_estimate_experiment(g, phi=phi, im_z=(1.0,))
        assert rep.n_skipped == 1 and rep.n_trials == 2

    def test_errors(self):
        g = Grid(10.0, 32)
        with pytest.raises(UsageError):
            radial_estimate_experiment(g, im_z=(0.0,), rng=make_rng(0))
        with pytest.raises(UsageError):
            radial_estimate_experiment(g)
        with pytest.raises(UsageError):
            RadialExperiment(g, sym=make_free(2))


class TestHelpers:
    def test_tilde_params(self):
        t = tilde_params(EscapeWeightParams(delta=0.6, M=2.0, nu=0.5))
        assert t.delta == pytest.approx((0.6 + 0.875) / 2)
        assert (t.M, t.nu) == (1.0, 0.25)

    def test_packets_stay_inside(self):
        g = Grid(40.0, 256)
        phi = wave_packets(g, 16, make_rng(0, "trial_vectors"))
        assert phi.shape == (256, 16)
        assert np.max(boundary_mass(g, phi)) < 1e-10
