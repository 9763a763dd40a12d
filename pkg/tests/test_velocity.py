import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftl_lwr.errors import ConfigError, DomainError, ModelError
from ftl_lwr.velocity import (
    BONZANI_FLUX_ARGMAX,
    BONZANI_V2_TURN,
    VelocityModel,
    check_assumptions,
    eval_flux,
    eval_velocity,
    parse_velocity,
)

GREENSHIELDS = VelocityModel.greenshields()
BONZANI = VelocityModel.bonzani_mussone()

densities = st.floats(0.0, 1.0, allow_nan=False)


class TestEvaluation:
    def test_greenshields_values(self):
        assert eval_velocity(GREENSHIELDS, 0.0) == 1.0
        assert eval_velocity(GREENSHIELDS, 1.0) == 0.0
        assert eval_flux(GREENSHIELDS, 0.5) == 0.25

    def test_bonzani_values(self):
        assert eval_velocity(BONZANI, 0.0) == 1.0
        assert eval_velocity(BONZANI, 1.0) == 0.0
        assert eval_velocity(BONZANI, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_linear_family(self):
        m = VelocityModel.linear(2.5)
        assert m.v_max == 2.5
        assert eval_velocity(m, 0.4) == pytest.approx(1.5)
        assert m.lipschitz_L == 2.5

    def test_tabulated_interpolates(self):
        m = VelocityModel.tabulated([0, 0.5, 1], [1, 0.25, 0])
        assert eval_velocity(m, 0.25) == pytest.approx(0.625)
        assert m.lipschitz_L == pytest.approx(1.5)

    @pytest.mark.parametrize("rho", [-0.1, 1.1, math.nan])
    def test_domain_error(self, rho):
        with pytest.raises(DomainError):
            eval_velocity(GREENSHIELDS, rho)
        with pytest.raises(DomainError):
            eval_flux(BONZANI, rho)

    def test_vectorized(self):
        rho = np.linspace(0, 1, 5)
        np.testing.assert_allclose(eval_velocity(GREENSHIELDS, rho), 1 - rho)

    def test_extension_beyond_jam_is_linear_and_finite(self):
        assert GREENSHIELDS.v(1.01) == pytest.approx(-0.01)
        assert BONZANI.v(1.5) == 0.0
        assert np.isfinite(BONZANI.dv(1.0))


class TestDerivatives:
    @given(densities.filter(lambda r: r < 0.99))
    def test_bonzani_dv_matches_finite_difference(self, rho):
        h = 1e-6
        lo, hi = max(rho - h, 0.0), rho + h
        fd = (BONZANI.v(hi) - BONZANI.v(lo)) / (hi - lo)
        assert BONZANI.dv(rho) == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_bonzani_lipschitz_constant(self):
        grid = np.linspace(0, 1, 200001)[:-1]
        assert np.max(np.abs(BONZANI.dv(grid))) == pytest.approx(4 / math.e, rel=1e-8)
        assert BONZANI.lipschitz_L == 4 / math.e

    def test_bonzani_flux_argmax(self):
        assert BONZANI.dflux(BONZANI_FLUX_ARGMAX) == pytest.approx(0.0, abs=1e-14)
        grid = np.linspace(0, 1, 100001)
        assert grid[np.argmax(BONZANI.flux(grid))] == pytest.approx(BONZANI_FLUX_ARGMAX, abs=1e-5)

    def test_max_abs_dflux(self):
        assert GREENSHIELDS.max_abs_dflux == 1.0
        assert BONZANI.max_abs_dflux == pytest.approx(1.0, abs=1e-12)


class TestAssumptions:
    def test_greenshields_satisfies_both(self):
        r = check_assumptions(GREENSHIELDS)
        assert r.v1_holds and r.v2_holds
        assert r.estimated_L == pytest.approx(1.0)
        assert r.estimated_c == pytest.approx(-1.0)
        assert GREENSHIELDS.is_concave

    def test_bonzani_fails_v2(self):
        r = check_assumptions(BONZANI)
        assert not r.v2_holds
        assert not BONZANI.is_concave
        # rho v'(rho) is minimal at the golden-ratio conjugate, then rises
        turn = r.grid[np.argmin(r.rho_dv)]
        assert turn == pytest.approx(BONZANI_V2_TURN, abs=2e-3)

    def test_bonzani_has_flat_jam_slope(self):
        # v'(1-) = 0, so no uniform negative bound c exists on [0, 1]
        r = check_assumptions(BONZANI)
        assert r.estimated_c == 0.0
        assert r.v_at_jam == 0.0

    def test_non_concave_table_detected(self):
        m = VelocityModel.tabulated([0, 0.2, 1], [1, 0.2, 0])
        assert not check_assumptions(m).v2_holds

    def test_grid_too_small(self):
        with pytest.raises(ConfigError):
            check_assumptions(GREENSHIELDS, grid_n=4)


class TestModelConstruction:
    @pytest.mark.parametrize(
        "rho, v",
        [([0, 1], [1]), ([0.1, 1], [1, 0]), ([0, 0.5, 0.4, 1], [1, 0.5, 0.4, 0]), ([0, 1], [1, math.inf])],
    )
    def test_bad_tables(self, rho, v):
        with pytest.raises(ModelError):
            VelocityModel.tabulated(rho, v)

    def test_bad_linear(self):
        with pytest.raises(ModelError):
            VelocityModel.linear(0.0)

    def test_parse(self, tmp_path):
        assert parse_velocity("greenshields") == GREENSHIELDS
        assert parse_velocity("bonzani") == BONZANI
        assert parse_velocity("linear:2").v_max == 2.0
        table = tmp_path / "v.csv"
        table.write_text("rho,v\n0,1\n0.5,0.5\n1,0\n")
        assert parse_velocity(f"table:{table}").v(0.25) == pytest.approx(0.75)
        for bad in ("nope", "linear:x", "table:/does/not/exist"):
            with pytest.raises(ConfigError):
                parse_velocity(bad)
