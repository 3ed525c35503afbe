import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaysde import (
    DelayAlignmentError,
    DelayMeasure,
    PathLattice,
    ProcessRole,
    TimeGrid,
    TimeIndexError,
    WeightedNormConfig,
    delay_average,
    delay_average_all,
    weighted_h2_norm,
    weighted_s2_norm,
)

from conftest import random_lattice


class TestTimeGrid:
    def test_dt_times_steps_recovers_horizon(self):
        for horizon, steps in [(1.0, 8), (2.5, 7), (0.3, 11)]:
            grid = TimeGrid(horizon=horizon, steps=steps)
            assert abs(grid.dt * steps - horizon) <= 2 * np.finfo(float).eps * horizon

    def test_grid_points_strictly_increasing(self):
        grid = TimeGrid(horizon=2.0, steps=16)
        times = grid.times()
        assert times[0] == 0.0
        assert np.all(np.diff(times) > 0)

    @pytest.mark.parametrize("horizon,steps", [(0.0, 4), (-1.0, 4), (1.0, 0), (math.inf, 4)])
    def test_rejects_bad_arguments(self, horizon, steps):
        with pytest.raises(ValueError):
            TimeGrid(horizon=horizon, steps=steps)


class TestPathLattice:
    def test_negative_time_follows_role_convention(self, grid8):
        values = np.arange(2 * 9, dtype=float).reshape(2, 9)
        forward = PathLattice(grid=grid8, role=ProcessRole.STATE_FORWARD, values=values, frozen_initial=7.0)
        backward = PathLattice(grid=grid8, role=ProcessRole.STATE_BACKWARD, values=values, frozen_initial=-2.0)
        control = PathLattice(grid=grid8, role=ProcessRole.CONTROL, values=values, frozen_initial=5.0)
        assert forward.value(1, -3) == 7.0
        assert backward.value(0, -1) == -2.0
        assert control.value(1, -1) == 0.0
        assert forward.value(1, 2) == values[1, 2]

    def test_rejects_non_finite_values(self, grid8):
        values = np.zeros((2, 9))
        values[1, 4] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            PathLattice(grid=grid8, role=ProcessRole.CONTROL, values=values)

    def test_values_immutable(self, grid8):
        lat = PathLattice.constant(grid8, 3, ProcessRole.STATE_BACKWARD, 1.0)
        with pytest.raises(ValueError):
            lat.values[0, 0] = 2.0

    def test_query_beyond_grid_is_bounds_error(self, grid8):
        lat = PathLattice.constant(grid8, 2, ProcessRole.CONTROL)
        with pytest.raises(TimeIndexError):
            lat.value(0, 9)


class TestDelayMeasure:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            DelayMeasure(((0.0, 0.5), (-0.5, 0.4)))

    def test_positive_lag_rejected(self):
        with pytest.raises(ValueError, match="<= 0"):
            DelayMeasure(((0.5, 1.0),))

    def test_duplicate_lags_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            DelayMeasure(((0.0, 0.5), (0.0, 0.5)))

    def test_misaligned_lag_raises(self, grid8):
        alpha = DelayMeasure.single_lag(-1.0 / 3.0)
        with pytest.raises(DelayAlignmentError, match="integer multiple"):
            alpha.lag_steps(grid8)

    def test_lag_below_horizon_raises(self, grid8):
        alpha = DelayMeasure.single_lag(-2.0)
        with pytest.raises(DelayAlignmentError, match="below -T"):
            alpha.lag_steps(grid8)

    def test_lag_steps_on_aligned_measure(self, grid8):
        alpha = DelayMeasure(((0.0, 0.25), (-0.125, 0.25), (-1.0, 0.5)))
        assert alpha.lag_steps(grid8) == (0, -1, -8)


class TestDelayAverage:
    def test_point_mass_is_identity(self, grid8, rng):
        lat = random_lattice(grid8, 5, ProcessRole.STATE_BACKWARD, rng)
        alpha = DelayMeasure.point_mass()
        for i in (0, 3, 8):
            for m in range(5):
                assert delay_average(lat, alpha, m, i) == lat.values[m, i]

    def test_constant_path_average_is_constant(self, grid8):
        lat = PathLattice.constant(grid8, 3, ProcessRole.STATE_BACKWARD, 4.5)
        alpha = DelayMeasure(((0.0, 0.5), (-grid8.dt, 0.5)))
        assert delay_average(lat, alpha, 0, 3) == pytest.approx(4.5, rel=1e-15)

    def test_control_lattice_full_lag_at_zero_is_zero(self, grid8, rng):
        lat = random_lattice(grid8, 4, ProcessRole.CONTROL, rng)
        alpha = DelayMeasure.single_lag(-grid8.horizon)
        assert delay_average(lat, alpha, 2, 0) == 0.0

    def test_hand_weighted_sum(self):
        # values v(t_i) = i on N=4; uniform atoms {0, -dt, -2dt} at i=2
        grid = TimeGrid(horizon=1.0, steps=4)
        values = np.tile(np.arange(5.0), (2, 1))
        lat = PathLattice(grid=grid, role=ProcessRole.STATE_BACKWARD, values=values, frozen_initial=0.0)
        alpha = DelayMeasure.uniform([0.0, -grid.dt, -2 * grid.dt])
        expected = (2.0 + 1.0 + 0.0) / 3.0
        assert delay_average(lat, alpha, 0, 2) == pytest.approx(expected, rel=1e-15)

    def test_vector_form_matches_scalar(self, grid8, rng):
        lat = random_lattice(grid8, 6, ProcessRole.STATE_FORWARD, rng)
        alpha = DelayMeasure(((0.0, 0.25), (-0.25, 0.75)))
        for i in (0, 1, 5):
            vec = delay_average_all(lat, alpha, i)
            for m in range(6):
                assert vec[m] == delay_average(lat, alpha, m, i)

    def test_out_of_range_index_raises(self, grid8):
        lat = PathLattice.constant(grid8, 2, ProcessRole.STATE_BACKWARD)
        with pytest.raises(TimeIndexError):
            delay_average(lat, DelayMeasure.point_mass(), 0, 9)
        with pytest.raises(TimeIndexError):
            delay_average(lat, DelayMeasure.point_mass(), 0, -1)

    @given(
        a=st.floats(-3, 3, allow_nan=False),
        b=st.floats(-3, 3, allow_nan=False),
        i=st.integers(0, 8),
    )
    @settings(max_examples=40, deadline=None)
    def test_linear_in_lattice_values(self, a, b, i):
        grid = TimeGrid(horizon=1.0, steps=8)
        rng = np.random.default_rng(7)
        v1 = rng.standard_normal((3, 9))
        v2 = rng.standard_normal((3, 9))
        alpha = DelayMeasure(((0.0, 0.5), (-0.25, 0.5)))
        mk = lambda v: PathLattice(grid=grid, role=ProcessRole.CONTROL, values=v)
        combined = delay_average(mk(a * v1 + b * v2), alpha, 1, i)
        separate = a * delay_average(mk(v1), alpha, 1, i) + b * delay_average(mk(v2), alpha, 1, i)
        assert combined == pytest.approx(separate, rel=1e-12, abs=1e-12)


class TestWeightedNorms:
    def test_zero_lattice_gives_zero(self, grid8):
        lat = PathLattice.constant(grid8, 4, ProcessRole.STATE_BACKWARD, 0.0)
        cfg = WeightedNormConfig.for_horizon(grid8.horizon)
        assert weighted_s2_norm(lat, cfg) == 0.0
        assert weighted_h2_norm(lat, cfg) == 0.0

    def test_constant_sup_norm_unweighted(self, grid8):
        lat = PathLattice.constant(grid8, 4, ProcessRole.STATE_BACKWARD, -3.0)
        assert weighted_s2_norm(lat, WeightedNormConfig(0.0)) == pytest.approx(9.0, rel=1e-15)

    def test_sup_norm_single_scenario_hand_value(self):
        # values (1, 2) at t = (0, 1) with beta = 1: max(1, 4e)
        grid = TimeGrid(horizon=1.0, steps=1)
        lat = PathLattice(
            grid=grid, role=ProcessRole.STATE_BACKWARD, values=np.array([[1.0, 2.0]])
        )
        got = weighted_s2_norm(lat, WeightedNormConfig(1.0))
        assert got == pytest.approx(4.0 * math.e, rel=1e-14)

    def test_quad_norm_constant_unweighted(self):
        grid = TimeGrid(horizon=2.0, steps=10)
        lat = PathLattice.constant(grid, 3, ProcessRole.CONTROL, 1.0)
        assert weighted_h2_norm(lat, WeightedNormConfig(0.0)) == pytest.approx(2.0, rel=1e-14)

    def test_quad_norm_left_riemann_hand_value(self):
        # constant 1, beta = 1/T, T = 1, N = 4: independent left-endpoint sum
        grid = TimeGrid(horizon=1.0, steps=4)
        lat = PathLattice.constant(grid, 2, ProcessRole.CONTROL, 1.0)
        oracle = sum(math.exp(i / 4.0) for i in range(4)) / 4.0
        got = weighted_h2_norm(lat, WeightedNormConfig.for_horizon(1.0))
        assert got == pytest.approx(oracle, rel=1e-14)

    @given(c=st.floats(-10, 10, allow_nan=False))
    @settings(max_examples=30, deadline=None)
    def test_norms_degree_two_homogeneous(self, c):
        grid = TimeGrid(horizon=1.0, steps=6)
        rng = np.random.default_rng(3)
        base = rng.standard_normal((4, 7))
        cfg = WeightedNormConfig.for_horizon(1.0)
        mk = lambda v: PathLattice(grid=grid, role=ProcessRole.STATE_BACKWARD, values=v)
        assert weighted_s2_norm(mk(c * base), cfg) == pytest.approx(
            c * c * weighted_s2_norm(mk(base), cfg), rel=1e-12, abs=1e-15
        )
        assert weighted_h2_norm(mk(c * base), cfg) == pytest.approx(
            c * c * weighted_h2_norm(mk(base), cfg), rel=1e-12, abs=1e-15
        )

    def test_quad_norm_converges_for_linear_path(self):
        # left-endpoint integration error for v(t) = t roughly halves with dt
        def error(steps):
            grid = TimeGrid(horizon=1.0, steps=steps)
            values = grid.times()[None, :].repeat(2, axis=0)
            lat = PathLattice(grid=grid, role=ProcessRole.CONTROL, values=values)
            exact = 1.0 / 3.0
            return abs(weighted_h2_norm(lat, WeightedNormConfig(0.0)) - exact)

        e1, e2 = error(32), error(64)
        assert e2 < e1
        assert e2 == pytest.approx(0.5 * e1, rel=0.15)
