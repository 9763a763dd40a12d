import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftl_lwr.atomize import ParticleConfig, atomize, half_box
from ftl_lwr.density import dirac_empirical, eulerian_density
from ftl_lwr.errors import ConfigError, ConsistencyError, NormalizationError
from ftl_lwr.metrics import (
    MetricValue,
    gap_difference,
    interpolation_bound,
    lipschitz_sup_bound,
    lp_distance,
    oleinik_residual,
    total_variation,
    uniform_velocity_bv_bound,
    velocity_total_variation,
    w1_distance,
    w1_gap_bound,
    write_metric_series,
)
from ftl_lwr.piecewise import MASS, PiecewiseConstantFn, PiecewiseLinearFn
from ftl_lwr.velocity import VelocityModel

from .test_density import configs

GREENSHIELDS = VelocityModel.greenshields()


def box(a, b, value=None):
    return PiecewiseConstantFn([a, b], [1.0 / (b - a) if value is None else value])


def random_lipschitz(rng, pieces):
    """Compactly supported 1-Lipschitz piecewise-linear function returning to zero."""
    widths = rng.uniform(0.01, 1.0, pieces)
    slopes = rng.uniform(-1.0, 1.0, pieces)
    nodes = np.concatenate([[0.0], np.cumsum(widths * slopes)])
    closing_slope = rng.uniform(0.1, 1.0)
    widths = np.append(widths, abs(nodes[-1]) / closing_slope + 1e-3)
    nodes = np.append(nodes, 0.0)
    bps = np.concatenate([[rng.uniform(-3, 3)], np.cumsum(widths)])
    bps[1:] += bps[0]
    return PiecewiseLinearFn.continuous(bps, nodes, left=0.0, right=0.0)


class TestW1:
    def test_identity(self):
        assert w1_distance(half_box(), half_box()) == 0.0

    @pytest.mark.parametrize("a", [0.1, 0.5, 2.0])
    def test_translation(self, a):
        assert w1_distance(box(0, 1), box(a, 1 + a)) == pytest.approx(a, rel=1e-14)

    def test_two_configs(self):
        a = eulerian_density(ParticleConfig([0, 0.5, 1]))
        b = eulerian_density(ParticleConfig([0, 0.25, 1]))
        assert w1_distance(a, b) == pytest.approx(1 / 8, rel=1e-14)

    @given(configs())
    def test_dirac_against_eulerian(self, config):
        # each atom spreads uniformly over its own cell: cost l * gap / 2 per cell
        x = config.positions
        expected = (x[-1] - x[0]) / (2 * config.n)
        assert w1_distance(dirac_empirical(config), eulerian_density(config)) == pytest.approx(expected, rel=1e-9)

    @settings(max_examples=50)
    @given(configs(max_n=12), configs(max_n=12))
    def test_symmetric_and_consistent(self, a, b):
        ra, rb = eulerian_density(a), eulerian_density(b)
        assert w1_distance(ra, rb) == pytest.approx(w1_distance(rb, ra), abs=1e-12)

    def test_mass_mismatch(self):
        with pytest.raises(NormalizationError):
            w1_distance(box(0, 1), box(0, 1, 0.5))


class TestLp:
    def test_identity(self):
        assert lp_distance(half_box(), half_box(), 1) == 0.0

    def test_disjoint(self):
        assert lp_distance(box(0, 1), box(1, 2), 1) == 2.0
        assert lp_distance(box(0, 1), box(1, 2), math.inf) == 1.0
        assert lp_distance(box(0, 1), box(1, 2), 2) == pytest.approx(math.sqrt(2))

    def test_cellwise(self):
        a = PiecewiseConstantFn([0, 0.25, 1], [2, 2 / 3])
        assert lp_distance(a, box(0, 1), 1) == pytest.approx(0.5)

    def test_domain_mismatch(self):
        with pytest.raises(ConfigError):
            lp_distance(box(0, 1), PiecewiseConstantFn([0, 1], [1], MASS))

    def test_bad_p(self):
        with pytest.raises(ConfigError):
            lp_distance(box(0, 1), box(0, 1), 3)


class TestTotalVariation:
    def test_box(self):
        assert total_variation(box(0, 1)) == 2.0

    def test_two_cells(self):
        assert total_variation(PiecewiseConstantFn([0, 0.25, 1], [2, 2 / 3])) == pytest.approx(4.0)

    def test_midpoint_scheme_n8(self):
        # cells alternate 1, 1/3: up 1, seven jumps of 2/3, down 1/3
        tv = total_variation(eulerian_density(atomize(half_box(), 8, "midpoint")))
        assert tv == pytest.approx(6.0, rel=1e-13)

    def test_velocity_tv_uses_free_flow_outside(self):
        config = ParticleConfig([0, 0.5, 1])
        # v = 0 on the jammed cells, v_max on the empty road either side
        assert velocity_total_variation(config, GREENSHIELDS) == 2.0


class TestOleinik:
    def test_rarefying_density(self):
        config = ParticleConfig([0, 0.25, 0.6, 1.2, 2.0])
        # rho = (1, 5/7, ...); the first slope (2/7) / (1/4) dominates
        assert oleinik_residual(config, GREENSHIELDS, 1.0) == pytest.approx(8 / 7)

    def test_uniform(self):
        assert oleinik_residual(atomize(half_box(), 10), GREENSHIELDS, 0.3) == pytest.approx(0.0, abs=1e-12)

    def test_increasing_density(self):
        config = ParticleConfig([0, 1, 1.5])
        # rho = (1/2, 1); slope (v(1) - v(1/2)) / 1 < 0
        assert oleinik_residual(config, GREENSHIELDS, 1.0) == pytest.approx(-0.5)

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_needs_positive_time(self, t):
        with pytest.raises(ConfigError):
            oleinik_residual(atomize(half_box(), 4), GREENSHIELDS, t)


class TestLipschitzSupBound:
    def test_zero(self):
        f = PiecewiseLinearFn.continuous([0, 1], [0, 0], left=0, right=0)
        r = lipschitz_sup_bound(f)
        assert (r.sup_norm, r.l1_norm, r.bound_ok) == (0.0, 0.0, True)

    @pytest.mark.parametrize("h", [0.1, 1.0, 3.0])
    def test_tent_is_extremal(self, h):
        f = PiecewiseLinearFn.continuous([0, h, 2 * h], [0, h, 0], left=0, right=0)
        r = lipschitz_sup_bound(f)
        assert r.l1_norm == pytest.approx(h * h)
        assert r.sup_norm == pytest.approx(math.sqrt(r.l1_norm))
        assert r.bound_ok

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_random_functions(self, seed, pieces):
        assert lipschitz_sup_bound(random_lipschitz(np.random.default_rng(seed), pieces)).bound_ok

    def test_steep_slope_rejected(self):
        f = PiecewiseLinearFn.continuous([0, 0.5, 1], [0, 1, 0], left=0, right=0)
        with pytest.raises(ConfigError):
            lipschitz_sup_bound(f)

    def test_not_compactly_supported(self):
        f = PiecewiseLinearFn.continuous([0, 1], [0, 1], left=0, right=1)
        with pytest.raises(ConfigError):
            lipschitz_sup_bound(f)


class TestBounds:
    @settings(max_examples=100)
    @given(st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_w1_gap_bound_with_common_leader(self, n, seed):
        rng = np.random.default_rng(seed)
        ga = (1 + rng.exponential(1.0, n)) / n
        gb = (1 + rng.exponential(1.0, n)) / n
        xa = np.concatenate([[0.0], np.cumsum(ga)])
        xb = np.concatenate([[0.0], np.cumsum(gb)])
        xb += xa[-1] - xb[-1]
        a, b = ParticleConfig(xa), ParticleConfig(xb)
        w1 = w1_distance(eulerian_density(a), eulerian_density(b))
        assert w1 <= w1_gap_bound(a, b) + 1e-12

    def test_gap_difference_needs_equal_n(self):
        with pytest.raises(ConfigError):
            gap_difference(ParticleConfig([0, 1]), ParticleConfig([0, 1, 2]))

    def test_interpolation_bound_formula(self):
        assert interpolation_bound(2.0, 1.0, 3.0, 0.25) == pytest.approx(4.0)

    def test_uniform_bv_bound_formula(self):
        assert uniform_velocity_bv_bound(GREENSHIELDS, 2.0, 0.5) == 11.0
        with pytest.raises(ConfigError):
            uniform_velocity_bv_bound(GREENSHIELDS, 2.0, 0.0)


class TestMetricSeries:
    def test_csv(self):
        buf = io.StringIO()
        write_metric_series(buf, [MetricValue("w1", 0.125, 0.5, 10)])
        assert buf.getvalue().splitlines() == ["t,metric,value,n", "0.5,w1,0.125,10"]

    def test_non_finite_rejected(self):
        with pytest.raises(ConsistencyError):
            MetricValue("w1", math.nan, 0.0, 1)
