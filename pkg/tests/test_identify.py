import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from discern_lab.dop import (EQUAL_WEIGHT_NE, Concept, DistributionOfPlay, evaluate_many,
                             fixed_weights)
from discern_lab.errors import AmbiguityError, ConfigError, EmptyNeighborhoodError, InversionError
from discern_lab.game import Theta
from discern_lab.identify import (COLLUSION, MAXMIN, NOT_IDENTIFIED, PARTIAL, POINT, RATIONALIZABLE,
                                  LimitConfig, ProbOracle, binned_oracle, discern_statistic,
                                  exact_oracle, identify, psi_profile, recover_alphas,
                                  recover_beta_delta, recover_beta_sign, recover_marginal_cdf,
                                  recover_rho)
from discern_lab.numerics import SeedStream, sample_correlated_normals, std_normal_cdf
from discern_lab.probabilities import MarketDesign

from . import frozen

CFG = LimitConfig()
ALPHA = ((0.0, -1.0), (0.0, -0.5))


def oracle(concept, alpha=ALPHA, beta=(1.0, 1.0), rho=0.0, sel=None):
    th = Theta(alpha, beta, rho)
    if concept == Concept.RATIONALIZABLE and sel is None:
        sel = fixed_weights((0.1, 0.2, 0.3, 0.4))
    return exact_oracle(DistributionOfPlay(th, concept, sel))


def phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


class UniformOracle(ProbOracle):
    def query(self, z1, z2):
        n = np.broadcast(np.atleast_1d(z1), np.atleast_1d(z2)).size
        return np.full((n, 4), 0.25)


class TestSlopes:
    def test_signs(self):
        o = oracle(Concept.SAA)
        assert (recover_beta_sign(o, CFG, 1), recover_beta_sign(o, CFG, 2)) == (1, 1)
        o = oracle(Concept.SAA, beta=(-2.0, 1.0))
        assert (recover_beta_sign(o, CFG, 1), recover_beta_sign(o, CFG, 2)) == (-1, 1)
        p = o.query([-CFG.L], [-CFG.L])[0]
        assert p[2] + p[3] < 1e-8 or p[0] + p[1] < 1e-8

    def test_uninformative_probe(self):
        with pytest.raises(AmbiguityError):
            recover_beta_sign(UniformOracle(), CFG, 1)

    def test_bad_player(self):
        with pytest.raises(ConfigError):
            recover_beta_sign(oracle(Concept.SAA), CFG, 3)

    def test_slope_and_location(self):
        # opponent-out entry curve is F(2 z + 1)
        o = oracle(Concept.RATIONALIZABLE, alpha=((1.0, 0.0), (0.0, -1.0)), beta=(2.0, 1.0))
        b, c = recover_beta_delta(o, CFG, 1)
        assert b == pytest.approx(2.0, abs=1e-9)
        assert c == pytest.approx(1.0, abs=1e-9)
        b, c = recover_beta_delta(oracle(Concept.RATIONALIZABLE, alpha=((0.0, -1.0), (0.0, -1.0))), CFG, 2)
        assert (b, c) == pytest.approx((1.0, 0.0), abs=1e-9)

    def test_moments_of_shifted_curve(self):
        # first two moments of t under dF(2t + 1) for standard normal F
        t = np.linspace(-8, 8, 160001)
        w = 2 * phi(2 * t + 1)
        assert trapezoid(t * w, t) == pytest.approx(-0.5, abs=1e-9)
        assert trapezoid(t * t * w, t) == pytest.approx(0.5, abs=1e-9)

    @pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
    def test_saa_location(self, eta):
        b, c = recover_beta_delta(exact_oracle(DistributionOfPlay(Theta.symmetric_entry(eta), Concept.SAA)), CFG, 1)
        assert b == pytest.approx(1.0, abs=1e-6)
        assert c == pytest.approx(eta, abs=1e-3)

    def test_negative_slope(self):
        o = oracle(Concept.SAA, beta=(-0.7, 1.6))
        assert recover_beta_delta(o, CFG, 1)[0] == pytest.approx(-0.7, abs=1e-9)
        assert recover_beta_delta(o, CFG, 2)[0] == pytest.approx(1.6, abs=1e-9)


class TestMarginal:
    def test_normal_marginal(self):
        F = recover_marginal_cdf(oracle(Concept.SAA, rho=0.3), CFG, 1)
        assert F.cdf(0.0) == pytest.approx(0.5, abs=1e-4)
        assert F.cdf(1.96) == pytest.approx(frozen.PHI_1_96, abs=1e-3)
        assert np.all(np.diff(F.F) >= 0)
        x = np.linspace(-3, 3, 601)
        assert np.max(np.abs(F.cdf(x) - std_normal_cdf(x))) <= 1e-3
        assert F.quantile(0.975) == pytest.approx(frozen.Q_0_975, abs=1e-3)
        with pytest.raises(InversionError):
            F.quantile(1.0)

    def test_supplied_slope(self):
        F = recover_marginal_cdf(oracle(Concept.SAA), CFG, 2, beta_i=1.0, delta_i=0.0)
        assert F.cdf(-1.0) == pytest.approx(std_normal_cdf(-1.0), abs=1e-4)


class TestAlphas:
    def test_rationalizable(self):
        got = {a.descriptor: a for a in recover_alphas(oracle(Concept.RATIONALIZABLE), CFG)}
        for (k, y), val in {(1, 0): 0.0, (1, 1): -1.0, (2, 0): 0.0, (2, 1): -0.5}.items():
            a = got[f"alpha_{k},{y}"]
            assert a.status == POINT and a.value == pytest.approx(val, abs=2e-3)

    def test_maxmin(self):
        got = {a.descriptor: a for a in recover_alphas(oracle(Concept.MAXMIN), CFG)}
        assert got["min(alpha_1,0, alpha_1,1)"].value == pytest.approx(-1.0, abs=2e-3)
        assert got["min(alpha_2,0, alpha_2,1)"].value == pytest.approx(-0.5, abs=2e-3)
        for name in ("alpha_1,0", "alpha_1,1", "alpha_2,0", "alpha_2,1"):
            assert got[name].status == NOT_IDENTIFIED and got[name].value is None

    def test_collusion(self):
        got = {a.descriptor: a for a in recover_alphas(oracle(Concept.COLLUSION), CFG)}
        assert got["alpha_1,1 + alpha_2,1"].value == pytest.approx(-1.5, abs=2e-3)
        assert got["alpha_1,0"].value == pytest.approx(0.0, abs=2e-3)
        for name in ("alpha_1,1", "alpha_2,1"):
            assert got[name].status == PARTIAL and got[name].value is None

    def test_bad_hint(self):
        with pytest.raises(ConfigError):
            recover_alphas(oracle(Concept.SAA), CFG, "Nash")

    def test_missing_descriptor(self):
        r = identify(oracle(Concept.MAXMIN), CFG, want_rho=False)
        assert r.alpha("alpha_1,1").status == NOT_IDENTIFIED
        assert r.alpha("nonsense").value is None


class TestDiscern:
    def test_rationalizable(self):
        t1, t2, cls = discern_statistic(oracle(Concept.RATIONALIZABLE), CFG)
        assert (t1, t2) == pytest.approx((-1.0, -0.5), abs=2e-3)
        assert cls == RATIONALIZABLE

    def test_maxmin(self):
        t1, t2, cls = discern_statistic(oracle(Concept.MAXMIN), CFG)
        assert (t1, t2) == pytest.approx((0.0, 0.0), abs=2e-3)
        assert cls == MAXMIN

    def test_collusion(self):
        t1, t2, cls = discern_statistic(oracle(Concept.COLLUSION), CFG)
        assert (t1, t2) == pytest.approx((-1.5, -1.5), abs=2e-3)
        assert cls == COLLUSION

    @pytest.mark.parametrize("concept,sel", [(Concept.SAA, None), (Concept.NASH, EQUAL_WEIGHT_NE)])
    def test_box_selections_are_rationalizable(self, concept, sel):
        t1, t2, cls = discern_statistic(oracle(concept, sel=sel), CFG)
        assert (t1, t2) == pytest.approx((-1.0, -0.5), abs=2e-3)
        assert cls == RATIONALIZABLE

    @given(st.lists(st.floats(0.01, 1), min_size=8, max_size=8))
    @settings(max_examples=8, deadline=None)
    def test_selection_invariance(self, raw):
        th = Theta(((0.2, -0.9), (-0.1, -0.6)), (1.3, 0.8), 0.25)
        res = []
        for w in (raw[:4], raw[4:]):
            w = np.array(w) / sum(w)
            o = exact_oracle(DistributionOfPlay(th, Concept.RATIONALIZABLE, fixed_weights(w)))
            r = identify(o, CFG, want_rho=False)
            res.append([r.beta_hat[0].value, r.beta_hat[1].value, r.delta_hat[0].value,
                        r.delta_hat[1].value, *r.t_stats])
        np.testing.assert_allclose(res[0], res[1], rtol=0, atol=1e-6)


class TestRho:
    @pytest.mark.parametrize("concept,rho", [(Concept.RATIONALIZABLE, 0.0), (Concept.SAA, 0.3),
                                             (Concept.MAXMIN, -0.5), (Concept.NASH, -0.5)])
    def test_recover(self, concept, rho):
        sel = EQUAL_WEIGHT_NE if concept == Concept.NASH else None
        o = oracle(concept, rho=rho, sel=sel)
        est = recover_rho(o, CFG)
        assert est == pytest.approx(rho, abs=0.05)
        assert recover_rho(o, CFG, f_e1=phi) == pytest.approx(rho, abs=0.05)
        if rho < 0:
            assert est < 0

    def test_psi_region_constant(self):
        rho = 0.3
        tau, psi = psi_profile(oracle(Concept.SAA, rho=rho), CFG, f_e1=phi)
        assert np.all(np.abs(psi[tau <= rho - 0.35] - 1) <= 0.02)
        assert np.all(np.abs(psi[tau >= rho + 0.35]) <= 0.02)

    def test_psi_box_mixture(self):
        rho = -0.2
        tau, psi = psi_profile(oracle(Concept.NASH, rho=rho, sel=EQUAL_WEIGHT_NE), CFG, f_e1=phi, L=16)
        assert np.all(np.abs(psi[tau <= rho - 0.2] - 1) <= 0.02)
        assert np.all(np.abs(psi[tau >= rho + 0.2]) <= 0.02)


class TestBinned:
    def test_saa_draws(self):
        n = 10**6
        d = DistributionOfPlay(Theta.symmetric_entry(1.0), Concept.SAA)
        e = sample_correlated_normals(0.0, n, SeedStream(8))
        p, degen = evaluate_many(d, -e[:, 0], -e[:, 1])
        assert not degen.any()
        y = np.argmax(p, axis=1)
        data = np.column_stack([np.zeros(n), np.zeros(n), y // 2, y % 2])
        o = binned_oracle(data, 0.1)
        assert o(MarketDesign(0.0, 0.0))[(0, 0)] == pytest.approx(frozen.P_SAA00_ETA1, abs=0.01)

    def test_single_row(self):
        o = binned_oracle([[0.3, -0.2, 1, 0]], 0.5)
        assert o.query([0.3], [-0.2])[0].tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_empty_neighbourhood(self):
        o = binned_oracle([[0.3, -0.2, 1, 0]], 0.1)
        with pytest.raises(EmptyNeighborhoodError):
            o.query([5.0], [5.0])

    def test_validation(self):
        with pytest.raises(ConfigError):
            binned_oracle([[0.0, 0.0, 2, 0]], 0.1)
        with pytest.raises(ConfigError):
            binned_oracle([[0.0, 0.0, 1, 0]], 0.0)
        with pytest.raises(ConfigError):
            binned_oracle(np.zeros((0, 4)), 0.1)

    def test_bootstrap_shape(self):
        o = binned_oracle([[0.0, 0.0, 1, 0], [0.1, 0.0, 0, 0]], 0.5)
        reps = o.query_bootstrap([0.0, 0.05], [0.0, 0.0], 7, SeedStream(1))
        assert reps.shape == (7, 2, 4)
        np.testing.assert_allclose(reps.sum(axis=2), 1.0)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(L=4), dict(fd_step=0.0), dict(fd_step=0.2), dict(grid_step=1.0),
                                    dict(tau_grid=(0.5, 0.1, 0.2)), dict(tau_grid=(-1.0, 0.0, 0.5)),
                                    dict(rho_ladder=(0.5,))])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            LimitConfig(**kw)

    def test_grid(self):
        g = LimitConfig(L=6, grid_step=0.5).grid
        assert g[0] == -6 and g[-1] == 6 and len(g) == 25
