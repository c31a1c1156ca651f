import math

import numpy as np
import pytest

from condflow.core import RngStream
from condflow.oracle import (DiscreteConditionalTarget, exact_quantile,
                             interpolant_density, interpolant_quantile,
                             oracle_velocity, posterior_mean,
                             score_from_velocity, self_check)


def two_atom(dy=0):
    return DiscreteConditionalTarget.fixed(
        atoms=np.array([[-1.0], [1.0]]), weights=np.array([0.5, 0.5]), dy=dy)


def point_mass(u=2.0):
    return DiscreteConditionalTarget.fixed(
        atoms=np.array([[u]]), weights=np.array([1.0]))


class TestConstruction:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            DiscreteConditionalTarget.fixed(np.array([[0.0]]),
                                            np.array([0.9]))
        with pytest.raises(ValueError):
            DiscreteConditionalTarget.fixed(np.array([[0.0], [1.0]]),
                                            np.array([1.0, -0.0]))

    def test_from_table_lookup(self):
        tgt = DiscreteConditionalTarget.from_table(
            ys=[[0.0], [1.0]],
            atom_table=[np.array([[-1.0]]), np.array([[5.0]])],
            weight_table=[np.array([1.0]), np.array([1.0])])
        assert tgt.conditional_mean([0.1])[0] == -1.0
        assert tgt.conditional_mean([0.9])[0] == 5.0

    def test_from_file_round_trip(self, tmp_path):
        path = tmp_path / "target.json"
        path.write_text('{"dx": 1, "dy": 0, "conditions": '
                        '[{"atoms": [[-1.0], [1.0]], "weights": [0.5, 0.5]}]}')
        tgt = DiscreteConditionalTarget.from_file(path)
        assert tgt.conditional_mean()[0] == pytest.approx(0.0)


class TestPosteriorMean:
    def test_independent_softmax_formula(self):
        # recompute the softmax-weighted average with plain loops
        tgt = DiscreteConditionalTarget.fixed(
            atoms=np.array([[-1.0], [0.5], [2.0]]),
            weights=np.array([0.2, 0.3, 0.5]))
        x, t = np.array([0.4]), 0.7
        var = 1.0 - t * t
        logits = [math.log(w) - (x[0] - t * a) ** 2 / (2 * var)
                  for a, w in zip([-1.0, 0.5, 2.0], [0.2, 0.3, 0.5])]
        ws = np.exp(np.array(logits) - max(logits))
        ws /= ws.sum()
        expect = ws @ np.array([-1.0, 0.5, 2.0])
        got = posterior_mean(tgt, x, None, t)
        assert got[0] == pytest.approx(expect, rel=1e-12)

    def test_at_zero_is_prior_mean(self):
        tgt = two_atom()
        pm = posterior_mean(tgt, np.array([3.7]), None, 0.0)
        assert pm[0] == pytest.approx(0.0, abs=1e-15)

    def test_near_one_concentrates(self):
        tgt = two_atom()
        pm = posterior_mean(tgt, np.array([0.999]), None, 0.999)
        assert pm[0] == pytest.approx(1.0, abs=1e-6)

    def test_per_row_t_matches_scalar(self):
        tgt = two_atom()
        xs = np.linspace(-2, 2, 7)[:, None]
        ts = np.linspace(0.1, 0.9, 7)
        rowwise = posterior_mean(tgt, xs, None, ts)
        for i in range(7):
            one = posterior_mean(tgt, xs[i], None, float(ts[i]))
            np.testing.assert_allclose(rowwise[i], one, rtol=1e-14)


class TestVelocity:
    def test_point_mass_closed_form(self):
        # v = (u - t x)/(1 - t^2) exactly for a single atom
        tgt = point_mass(2.0)
        for t in (0.0, 0.3, 0.9):
            x = np.array([0.7])
            v = oracle_velocity(tgt, x, None, t)
            assert v[0] == pytest.approx((2.0 - t * 0.7) / (1 - t * t), rel=1e-14)

    def test_zero_time_gives_conditional_mean(self):
        tgt = DiscreteConditionalTarget.fixed(
            atoms=np.array([[-1.0], [2.0]]), weights=np.array([0.25, 0.75]))
        v = oracle_velocity(tgt, np.array([123.0]), None, 0.0)
        assert v[0] == pytest.approx(1.25, rel=1e-14)

    def test_rejects_t_at_one(self):
        with pytest.raises(ValueError):
            oracle_velocity(two_atom(), np.array([0.0]), None, 1.0)

    def test_velocity_field_batched(self):
        tgt = two_atom(dy=1)
        field = tgt.velocity_field()
        assert field.dx == 1
        x = np.linspace(-1, 1, 5)[:, None]
        v = field(x, np.zeros((5, 1)), 0.5)
        assert v.shape == (5, 1)
        for i in range(5):
            np.testing.assert_allclose(
                v[i], oracle_velocity(tgt, x[i], np.zeros(1), 0.5), rtol=1e-14)


class TestDensity:
    def test_integrates_to_one(self):
        tgt = two_atom()
        for t in (0.0, 0.5, 0.95):
            grid = np.linspace(-8, 8, 4001)[:, None]
            dens = interpolant_density(tgt, grid, None, t)
            assert np.trapezoid(dens, grid[:, 0]) == pytest.approx(1.0, abs=1e-8)

    def test_matches_gaussian_mixture(self):
        tgt = two_atom()
        t = 0.6
        var = 1 - t * t
        x = 0.3
        expect = sum(0.5 * math.exp(-(x - t * a) ** 2 / (2 * var))
                     / math.sqrt(2 * math.pi * var) for a in (-1.0, 1.0))
        got = interpolant_density(tgt, np.array([x]), None, t)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_score_consistency_fd(self):
        # t*v - x must equal d/dx log f_t, checked by central differences
        tgt = DiscreteConditionalTarget.fixed(
            atoms=np.array([[-0.5], [0.2], [1.0]]),
            weights=np.array([0.3, 0.3, 0.4]))
        rng = RngStream(1)
        for _ in range(50):
            t = 0.05 + 0.9 * float(rng.uniform(1)[0])
            x = rng.gauss(1)
            v = oracle_velocity(tgt, x, None, t)
            s = score_from_velocity(x, t, v)
            h = 1e-6
            fd = (math.log(interpolant_density(tgt, x + h, None, t))
                  - math.log(interpolant_density(tgt, x - h, None, t))) / (2 * h)
            assert s[0] == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_score_rejects_zero_time(self):
        with pytest.raises(ValueError):
            score_from_velocity(np.array([1.0]), 0.0, np.array([0.0]))


class TestQuantiles:
    def test_exact_quantile_two_atoms(self):
        tgt = two_atom()
        assert exact_quantile(tgt, 0.25) == -1.0
        assert exact_quantile(tgt, 0.75) == 1.0

    def test_interpolant_quantile_inverts_cdf(self):
        tgt = two_atom()
        t = 0.8
        for p in (0.1, 0.5, 0.9):
            q = interpolant_quantile(tgt, p, t)
            # verify by numerically integrating the density up to q
            grid = np.linspace(-8, q, 20001)[:, None]
            mass = np.trapezoid(interpolant_density(tgt, grid, None, t),
                                grid[:, 0])
            assert mass == pytest.approx(p, abs=1e-6)

    def test_point_mass_interpolant_quantile_gaussian(self):
        tgt = point_mass(1.0)
        t = 0.5
        # median of N(t*u, 1-t^2) is t*u
        assert interpolant_quantile(tgt, 0.5, t) == pytest.approx(0.5, abs=1e-9)


class TestSelfCheck:
    def test_clean_target_passes(self):
        result = self_check(two_atom(), T=0.99, probes=200,
                            rng=RngStream(0))
        assert result["score_rel_err"] <= 1e-4
        assert result["mean_limit_err"] <= 1e-4
        assert result["lipschitz_ratio"] < 1.0
