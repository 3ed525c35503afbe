import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaysde import (
    CoefficientKind,
    DelayMeasure,
    GeneratorSpec,
    PathLattice,
    ProblemMode,
    ProcessRole,
    TerminalRule,
    TimeGrid,
    check_contraction,
    composed_lipschitz,
    make_homogeneous_driver,
    make_transformed_coefficients,
    map_back_solution,
)

from conftest import (
    BACKWARD_DIFFUSION,
    DIFFUSION,
    DRIFT,
    DRIVER,
    bsde_spec,
    coefficient,
    fbsdde_spec,
    random_lattice,
)


class TestContractionCertificate:
    def test_backward_mode_small_constant_satisfied(self):
        spec = bsde_spec(coefficient(DRIVER, "zero", k=0.01))
        cert = check_contraction(spec)
        assert cert.rho == pytest.approx(0.08, rel=1e-15)
        assert cert.satisfied

    def test_backward_mode_boundary_not_satisfied(self):
        # rho = 1 exactly; the condition is strict
        spec = bsde_spec(coefficient(DRIVER, "zero", k=0.125))
        cert = check_contraction(spec)
        assert cert.rho == 1.0
        assert not cert.satisfied

    def test_coupled_mode_small_constant(self):
        spec = fbsdde_spec(
            coefficient(DRIVER, "zero", k=0.01),
            coefficient(DRIFT, "zero", k=0.01),
            coefficient(DIFFUSION, "zero", k=0.01),
        )
        cert = check_contraction(spec)
        assert cert.rho == pytest.approx(24.0 * 0.01 * math.e, rel=1e-15)
        assert cert.satisfied

    def test_coupled_mode_longer_horizon_fails(self):
        spec = fbsdde_spec(
            coefficient(DRIVER, "zero", k=0.01),
            coefficient(DRIFT, "zero", k=0.01),
            coefficient(DIFFUSION, "zero", k=0.01),
            horizon=2.0,
            x=0.0,
            xi=("const", (1.0,)),
        )
        cert = check_contraction(spec)
        assert cert.rho == pytest.approx(24.0 * 0.01 * math.e * 4.0, rel=1e-15)
        assert not cert.satisfied

    def test_k_effective_is_max_over_coefficients(self):
        spec = bsde_spec(
            coefficient(DRIVER, "zero", k=0.01),
            g=coefficient(BACKWARD_DIFFUSION, "zero", k=0.03),
        )
        assert spec.k_effective == 0.03
        assert check_contraction(spec).rho == pytest.approx(8.0 * 0.03, rel=1e-15)

    @given(
        k1=st.floats(1e-4, 1.0), k2=st.floats(1e-4, 1.0),
        t1=st.floats(0.1, 4.0), t2=st.floats(0.1, 4.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_constant_and_horizon(self, k1, k2, t1, t2):
        lo_k, hi_k = sorted((k1, k2))
        lo_t, hi_t = sorted((t1, t2))
        for mode in ProblemMode:
            mk = lambda k, t: (
                bsde_spec(coefficient(DRIVER, "zero", k=k), horizon=t, xi=("const", (1.0,)))
                if mode is ProblemMode.BSDE
                else fbsdde_spec(
                    coefficient(DRIVER, "zero", k=k),
                    coefficient(DRIFT, "zero", k=k),
                    coefficient(DIFFUSION, "zero", k=k),
                    horizon=t, x=0.0, xi=("const", (1.0,)),
                )
            )
            if check_contraction(mk(hi_k, hi_t)).satisfied:
                assert check_contraction(mk(lo_k, lo_t)).satisfied

    def test_composed_constant_bookkeeping(self):
        spec = bsde_spec(
            coefficient(DRIVER, "zero", k=0.05),
            g=coefficient(BACKWARD_DIFFUSION, "zero", k=0.2),
        )
        assert composed_lipschitz(spec) == pytest.approx(2.0 * 0.05 * 1.2, rel=1e-15)


class TestGeneratorSpec:
    def test_negative_time_evaluates_to_zero(self):
        gen = coefficient(DRIVER, "affine", (3.0, 1.0, 1.0, 1.0))
        assert gen.evaluate(-0.25, 5.0, 5.0, 5.0) == 0.0
        assert gen.evaluate(0.0, 0.0, 0.0, 0.0) == 3.0

    def test_nonpositive_constant_rejected(self):
        with pytest.raises(ValueError, match="lipschitz_k"):
            coefficient(DRIVER, "zero", k=0.0)

    def test_backward_diffusion_takes_three_arguments(self):
        gen = coefficient(BACKWARD_DIFFUSION, "linear", (2.0, 3.0))
        assert gen.evaluate(0.5, 1.0, 10.0) == pytest.approx(32.0)

    def test_catalog_equality_ignores_callable_identity(self):
        a = coefficient(DRIVER, "linear", (0.0, 1.0, 0.0))
        b = coefficient(DRIVER, "linear", (0.0, 1.0, 0.0))
        assert a == b
        assert a != coefficient(DRIVER, "linear", (0.0, 2.0, 0.0))


def _lattices(grid, scenarios, rng):
    x = random_lattice(grid, scenarios, ProcessRole.STATE_FORWARD, rng)
    y = random_lattice(grid, scenarios, ProcessRole.STATE_BACKWARD, rng)
    z_bar = random_lattice(grid, scenarios, ProcessRole.CONTROL, rng)
    return x, y, z_bar


class TestHomogeneousDriver:
    def test_zero_shift_reproduces_driver(self, grid8, rng):
        f = coefficient(DRIVER, "affine", (0.3, 0.0, 0.5, 0.7),
                        lags=[0.0, -0.25], weights=[0.5, 0.5])
        g = coefficient(BACKWARD_DIFFUSION, "zero")
        shifted = make_homogeneous_driver(f, g)
        _, y, z_bar = _lattices(grid8, 5, rng)
        for i in range(grid8.steps + 1):
            assert np.array_equal(
                shifted.evaluate_all(i, None, y, z_bar),
                f.evaluate_all(i, None, y, z_bar),
            )

    def test_point_mass_shift_is_current_difference(self, grid8, rng):
        # f(t, z_avg) = z_avg and g(t, y_avg) = y_avg, both undelayed
        f = coefficient(DRIVER, "linear", (0.0, 0.0, 1.0))
        g = coefficient(BACKWARD_DIFFUSION, "linear", (0.0, 1.0))
        shifted = make_homogeneous_driver(f, g)
        _, y, z_bar = _lattices(grid8, 4, rng)
        for i in (0, 3, 8):
            expected = z_bar.values[:, i] - y.values[:, i]
            assert np.array_equal(shifted.evaluate_all(i, None, y, z_bar), expected)

    def test_one_step_lag_uses_previous_point_and_zero_at_start(self, grid8, rng):
        f = coefficient(DRIVER, "linear", (0.0, 0.0, 1.0), lags=[-grid8.dt], weights=[1.0])
        g = coefficient(BACKWARD_DIFFUSION, "linear", (0.0, 1.0))
        shifted = make_homogeneous_driver(f, g)
        _, y, z_bar = _lattices(grid8, 4, rng)
        got_interior = shifted.evaluate_all(3, None, y, z_bar)
        expected = z_bar.values[:, 2] - y.values[:, 2]
        assert np.array_equal(got_interior, expected)
        # at i = 0 the lag points below time zero: control and shift both vanish
        assert np.array_equal(shifted.evaluate_all(0, None, y, z_bar), np.zeros(4))

    def test_kind_mismatch_rejected(self):
        f = coefficient(DRIVER, "zero")
        with pytest.raises(ValueError, match="kind"):
            make_homogeneous_driver(f, f)


class TestTransformedTriple:
    def test_zero_shift_leaves_all_three_unchanged(self, grid8, rng):
        b = coefficient(DRIFT, "affine", (0.1, 0.2, 0.3, 0.4))
        sigma = coefficient(DIFFUSION, "linear", (0.5, 0.0, 0.2))
        f = coefficient(DRIVER, "linear", (0.0, 0.3, 0.9), lags=[0.0, -0.125], weights=[0.25, 0.75])
        g = coefficient(BACKWARD_DIFFUSION, "zero")
        x, y, z_bar = _lattices(grid8, 5, rng)
        for base, shifted in zip((b, sigma, f), make_transformed_coefficients(b, sigma, f, g)):
            for i in (0, 4, 8):
                assert np.array_equal(
                    shifted.evaluate_all(i, x, y, z_bar),
                    base.evaluate_all(i, x, y, z_bar),
                )

    def test_diffusion_shift_symbolic_case(self, grid8, rng):
        # sigma(t, z_avg) = z_avg, g(t, x_avg, y_avg) = x_avg, undelayed:
        # the shifted diffusion evaluates to z_bar(t) - x(t)
        b = coefficient(DRIFT, "zero")
        sigma = coefficient(DIFFUSION, "linear", (0.0, 0.0, 1.0))
        f = coefficient(DRIVER, "zero")
        g = coefficient(BACKWARD_DIFFUSION, "linear", (1.0, 0.0))
        _, sigma_t, _ = make_transformed_coefficients(b, sigma, f, g)
        x, y, z_bar = _lattices(grid8, 4, rng)
        for i in (0, 5, 8):
            expected = z_bar.values[:, i] - x.values[:, i]
            assert np.array_equal(sigma_t.evaluate_all(i, x, y, z_bar), expected)

    def test_drift_without_control_dependence_unchanged(self, grid8, rng):
        b = coefficient(DRIFT, "affine", (0.2, 0.5, 0.1, 0.0))  # no z coefficient
        sigma = coefficient(DIFFUSION, "zero")
        f = coefficient(DRIVER, "zero")
        g = coefficient(BACKWARD_DIFFUSION, "linear", (0.3, 0.4))
        b_t, _, _ = make_transformed_coefficients(b, sigma, f, g)
        x, y, z_bar = _lattices(grid8, 4, rng)
        for i in range(grid8.steps + 1):
            assert np.array_equal(
                b_t.evaluate_all(i, x, y, z_bar), b.evaluate_all(i, x, y, z_bar)
            )


class TestMapBack:
    def test_zero_shift_is_identity(self, grid8, rng):
        _, y, z_bar = _lattices(grid8, 4, rng)
        g = coefficient(BACKWARD_DIFFUSION, "zero")
        y_out, z_out = map_back_solution(y, z_bar, g)
        assert y_out is y
        assert np.array_equal(z_out.values, z_bar.values)

    def test_constant_state_hand_value(self, grid8):
        y = PathLattice.constant(grid8, 3, ProcessRole.STATE_BACKWARD, 2.5)
        z_bar = PathLattice.constant(grid8, 3, ProcessRole.CONTROL, 0.0)
        g = coefficient(BACKWARD_DIFFUSION, "linear", (0.0, 1.0))
        _, z = map_back_solution(y, z_bar, g)
        assert np.all(z.values == -2.5)

    def test_readding_shift_recovers_control_on_dyadic_data(self, grid8):
        # dyadic values and weights keep every float operation exact, so the
        # algebraic inverse is exact bit for bit
        rng = np.random.default_rng(5)
        scale = 1.0 / 1024.0
        mk = lambda role: PathLattice(
            grid=grid8, role=role,
            values=rng.integers(-4096, 4096, (4, 9)).astype(float) * scale,
        )
        y = mk(ProcessRole.STATE_BACKWARD)
        z_bar = mk(ProcessRole.CONTROL)
        g = coefficient(BACKWARD_DIFFUSION, "linear", (0.0, 0.5),
                        lags=[0.0, -0.25], weights=[0.5, 0.5])
        _, z = map_back_solution(y, z_bar, g)
        g_vals = np.column_stack([
            g.evaluate_all(i, None, y, None) for i in range(grid8.steps + 1)
        ])
        assert np.array_equal(z.values + g_vals, z_bar.values)

    def test_grid_mismatch_rejected(self, rng):
        grid_a = TimeGrid(horizon=1.0, steps=8)
        grid_b = TimeGrid(horizon=1.0, steps=4)
        y = random_lattice(grid_a, 3, ProcessRole.STATE_BACKWARD, rng)
        z = random_lattice(grid_b, 3, ProcessRole.CONTROL, rng)
        g = coefficient(BACKWARD_DIFFUSION, "zero")
        with pytest.raises(ValueError, match="grid"):
            map_back_solution(y, z, g)


class TestTransformCoherence:
    """Evaluating the shifted driver on the homogeneous pair must agree,
    bit for bit, with evaluating the original driver on the mapped-back
    control at every lattice point."""

    @pytest.mark.parametrize("seed", range(5))
    def test_driver_on_mapped_control_matches(self, seed):
        rng = np.random.default_rng(seed)
        grid = TimeGrid(horizon=1.0, steps=8)
        x, y, z_bar = _lattices(grid, 6, rng)
        f = coefficient(DRIVER, "affine", (0.1, 0.2, 0.4, 0.8),
                        lags=[0.0, -0.25, -0.5], weights=[0.5, 0.25, 0.25])
        g = coefficient(BACKWARD_DIFFUSION, "clipped_linear", (2.0, 0.3, 0.6),
                        lags=[0.0, -0.125], weights=[0.75, 0.25])
        shifted = make_homogeneous_driver(f, g)
        _, z = map_back_solution(y, z_bar, g, x)
        for i in range(grid.steps + 1):
            left = shifted.evaluate_all(i, x, y, z_bar)
            right = f.evaluate_all(i, x, y, z)
            assert np.array_equal(left, right)
