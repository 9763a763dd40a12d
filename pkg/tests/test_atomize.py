from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftl_lwr.atomize import (
    InitialDensity,
    ParticleConfig,
    atomize,
    atomize_dfr,
    atomize_midpoint_shift,
    half_box,
    load_initial_density,
    two_level,
    unit_box,
    validate_config,
)
from ftl_lwr.density import eulerian_density
from ftl_lwr.errors import AdmissibilityError, ConfigError, NormalizationError
from ftl_lwr.metrics import total_variation


@st.composite
def step_densities(draw):
    """Random unit-mass piecewise-constant densities bounded by 1, possibly with vacuum cells."""
    k = draw(st.integers(1, 6))
    widths = draw(st.lists(st.integers(1, 8), min_size=k, max_size=k))
    weights = draw(st.lists(st.integers(0, 8), min_size=k, max_size=k).filter(lambda w: w[0] > 0 and w[-1] > 0))
    total = sum(Fraction(w * b) for w, b in zip(weights, widths))
    values = [Fraction(w) / total for w in weights]
    # stretch the support when needed so the peak stays <= 1 at unit mass
    stretch = max(Fraction(1), max(values))
    values = [v / stretch for v in values]
    bps = [Fraction(0)]
    for b in widths:
        bps.append(bps[-1] + b * stretch)
    return InitialDensity.from_cells([float(b) for b in bps], [float(v) for v in values])


class TestDfr:
    def test_unit_box(self):
        np.testing.assert_array_equal(atomize_dfr(unit_box(), 2).positions, [0, 0.5, 1])

    def test_half_box(self):
        np.testing.assert_array_equal(atomize_dfr(half_box(), 2).positions, [0.5, 1.5, 2.5])

    def test_two_step_profile(self):
        rho = InitialDensity.from_cells([0, 0.5, 1.5], [1.0, 0.5])
        np.testing.assert_array_equal(atomize_dfr(rho, 2).positions, [0, 0.5, 1.5])

    def test_reproduces_uniform_profile(self):
        rho = eulerian_density(atomize_dfr(half_box(), 4))
        np.testing.assert_allclose(rho.values, 0.5, rtol=1e-15)

    def test_vacuum_takes_left_end_of_plateau(self):
        # mass 1/2 on [0, 1], nothing on [1, 2], mass 1/2 on [2, 3]
        rho = InitialDensity.from_cells([0, 1, 2, 3], [0.5, 0, 0.5])
        x = atomize_dfr(rho, 2).positions
        np.testing.assert_array_equal(x, [0, 1, 3])

    @settings(max_examples=60, deadline=None)
    @given(step_densities(), st.integers(1, 40))
    def test_equal_mass_and_endpoints(self, rho_bar, n):
        x = atomize_dfr(rho_bar, n).positions
        lo, hi = rho_bar.support
        assert x[0] == lo and x[-1] == hi
        masses = [rho_bar.profile.integrate_over(a, b) for a, b in zip(x[:-1], x[1:])]
        np.testing.assert_allclose(masses, 1.0 / n, atol=1e-12)

    def test_density_above_one_rejected_at_construction(self):
        with pytest.raises(ConfigError):
            InitialDensity.from_cells([0, 0.5], [2.0])

    def test_bad_mass(self):
        with pytest.raises(NormalizationError):
            InitialDensity.from_cells([0, 1], [0.5])

    @pytest.mark.parametrize("n", [0, -3, 2.5])
    def test_bad_n(self, n):
        with pytest.raises(ConfigError):
            atomize_dfr(unit_box(), n)


class TestMidpointShift:
    def test_two_vehicles(self):
        out = atomize_midpoint_shift(ParticleConfig([0, 0.5, 1]), check=False)
        np.testing.assert_array_equal(out.positions, [0, 0.25, 1])

    def test_three_vehicles(self):
        out = atomize_midpoint_shift(ParticleConfig([0, 1, 2, 3]))
        np.testing.assert_array_equal(out.positions, [0, 0.5, 2, 3])

    def test_on_half_box(self):
        out = atomize(half_box(), 4, "midpoint")
        np.testing.assert_allclose(out.positions, [0.5, 0.75, 1.5, 1.75, 2.5])

    def test_inadmissible_output_reported(self):
        with pytest.raises(AdmissibilityError) as info:
            atomize_midpoint_shift(ParticleConfig([0, 0.5, 1]))
        assert info.value.violations[0].kind == "gap_below_l"

    def test_even_indices_and_leader_fixed(self):
        base = atomize_dfr(half_box(), 9)
        out = atomize_midpoint_shift(base)
        np.testing.assert_array_equal(out.positions[::2], base.positions[::2])
        assert out.positions[-1] == base.positions[-1]

    def test_not_an_involution(self):
        base = atomize_dfr(half_box(), 8)
        twice = atomize_midpoint_shift(atomize_midpoint_shift(base), check=False)
        np.testing.assert_array_equal(twice.positions[::2], base.positions[::2])
        assert not np.array_equal(twice.positions, base.positions)

    @pytest.mark.parametrize("n", [8, 16, 32, 64])
    def test_tv_grows_linearly(self, n):
        tv = total_variation(eulerian_density(atomize(half_box(), n, "midpoint")))
        assert tv >= n / 4
        # densities alternate 1 and 1/3
        assert tv == pytest.approx(2 * n / 3 + 2 / 3, rel=1e-12)


class TestValidate:
    def test_ok(self):
        assert validate_config(ParticleConfig([0, 0.5, 1])) == []

    def test_gap_below_l(self):
        (v,) = validate_config(ParticleConfig([0, 0.2, 1]))
        assert (v.kind, v.index) == ("gap_below_l", 0)
        assert v.magnitude == pytest.approx(0.3)

    def test_not_increasing(self):
        kinds = {v.kind for v in validate_config(ParticleConfig([0, 0, 1]))}
        assert "not_increasing" in kinds

    def test_non_finite(self):
        assert validate_config(ParticleConfig([0, np.nan, 1]))[0].kind == "non_finite"


class TestLoading:
    def test_builtins(self):
        assert load_initial_density("two_level").x_max == 2.0
        assert two_level().sup_norm == 1.0

    def test_csv(self, tmp_path):
        path = tmp_path / "rho.csv"
        path.write_text("breakpoint,value\n0.5,0.5\n2.5,0\n")
        rho = load_initial_density(str(path))
        assert rho.support == (0.5, 2.5)

    def test_missing(self):
        with pytest.raises(ConfigError):
            load_initial_density("/no/such/file.csv")
