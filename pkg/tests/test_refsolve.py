import numpy as np
import pytest

from flowmarch.catalog import exact_linear_solution, get_system
from flowmarch.errors import StageSolverError
from flowmarch.odecore import Trajectory, error_metrics
from flowmarch.refsolve import (
    DIRK_GAMMA,
    Tolerances,
    dp54_adaptive,
    newton_root,
    reference_trajectory,
    rk4_fixed,
    rk4_step,
    sdirk2_adaptive,
    sdirk2_step,
)

from conftest import decay_system


class TestRk4:
    def test_exponential_growth_oracle(self):
        # dy/dt = y over [0, 1] at h = 1e-3 keeps |y(1) - e| below 1e-9
        def rhs(y, t):
            return y

        sys_ = decay_system(-1.0)  # -(-1) * y = +y
        traj = rk4_fixed(sys_, np.array([1.0]), 0.0, 1.0, 1e-3)
        assert abs(traj.states[-1, 0] - np.e) < 1e-9

    def test_fourth_order_slope(self):
        pend = get_system("pendulum_free")
        y0 = np.array([1.0, -1.0])
        fine = rk4_fixed(pend, y0, 0.0, 2.0, 1e-4).states[-1]
        errs = []
        for h in (0.1, 0.05, 0.025):
            end = rk4_fixed(pend, y0, 0.0, 2.0, h).states[-1]
            errs.append(np.max(np.abs(end - fine)))
        slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(slopes - 4.0) < 0.3)

    def test_step_grid_snaps_to_tf(self):
        traj = rk4_fixed(decay_system(), np.array([1.0]), 0.0, 1.0, 0.3)
        assert traj.times[-1] == 1.0
        assert len(traj.times) == 5  # 0, .3, .6, .9, 1.0

    def test_single_step_matches_fixed(self):
        sys_ = decay_system(0.7)
        y = np.array([2.0])
        np.testing.assert_array_equal(
            rk4_step(sys_, y, 0.0, 0.1),
            rk4_fixed(sys_, y, 0.0, 0.1, 0.1).states[-1],
        )


class TestDp54:
    def test_matches_linear_exact_solution(self):
        lin = get_system("linear")
        traj = dp54_adaptive(lin, np.array([0.0]), 0.0, 1.0,
                             Tolerances(atol=1e-14, rtol=1e-12))
        exact = exact_linear_solution(100.0, 0.0, 0.0, 1.0)
        assert abs(traj.states[-1, 0] - exact) < 1e-9

    def test_grid_recording_hits_requested_times(self):
        lin = get_system("linear")
        grid = np.array([0.0, 0.013, 0.27, 0.5, 0.777, 1.0])
        traj = dp54_adaptive(lin, np.array([0.0]), 0.0, 1.0,
                             Tolerances(atol=1e-14, rtol=1e-12), grid=grid)
        assert np.array_equal(traj.times, grid)
        exact = np.asarray(exact_linear_solution(100.0, 0.0, 0.0, grid))
        assert np.max(np.abs(traj.states[:, 0] - exact)) < 1e-9

    def test_zero_span(self):
        traj = dp54_adaptive(decay_system(), np.array([3.0]), 1.0, 1.0)
        assert len(traj.times) == 1 and traj.states[0, 0] == 3.0

    def test_backward_span_rejected(self):
        with pytest.raises(ValueError):
            dp54_adaptive(decay_system(), np.array([1.0]), 1.0, 0.0)


class TestSdirk2:
    def test_stability_magnitude_never_exceeds_one(self):
        # scalar dy/dt = -lam*y: one step from y=1 must not grow, however
        # stiff the product lam*h is
        for lam_h in np.logspace(-2, 6, 25):
            sys_ = decay_system(float(lam_h))
            y_new, _ = sdirk2_step(sys_, np.array([1.0]), 0.0, 1.0)
            assert abs(y_new[0]) <= 1.0 + 1e-12, f"growth at lam*h={lam_h}"

    def test_l_stability_limit(self):
        # R(z) -> 0 as lam*h -> inf
        y_new, _ = sdirk2_step(decay_system(1e12), np.array([1.0]), 0.0, 1.0)
        assert abs(y_new[0]) < 1e-9

    def test_second_order_accuracy(self):
        sys_ = decay_system(1.0)
        errs = []
        for h in (0.02, 0.01, 0.005):
            y = np.array([1.0])
            t = 0.0
            while t < 1.0 - 1e-12:
                y, _ = sdirk2_step(sys_, y, t, h)
                t += h
            errs.append(abs(y[0] - np.exp(-1.0)))
        slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(slopes - 2.0) < 0.2)

    def test_adaptive_handles_stiff_linear(self):
        lin = get_system("linear", lam=1e6)
        traj = sdirk2_adaptive(lin, np.array([0.0]), 0.0, 0.01,
                               Tolerances(atol=1e-10, rtol=1e-8))
        exact = exact_linear_solution(1e6, 0.0, 0.0, float(traj.times[-1]))
        assert abs(traj.states[-1, 0] - exact) < 1e-6

    def test_gamma_constant(self):
        assert DIRK_GAMMA == pytest.approx(1.0 - np.sqrt(2.0) / 2.0, rel=0)


class TestNewtonRoot:
    def test_scalar_quadratic(self):
        root = newton_root(
            lambda x: x * x - 2.0,
            lambda x: np.array([[2.0 * x[0]]]),
            np.array([1.0]),
        )
        assert abs(root[0] - np.sqrt(2.0)) < 1e-12

    def test_vector_system(self):
        # intersection of a circle and a line
        def F(x):
            return np.array([x[0] ** 2 + x[1] ** 2 - 4.0, x[0] - x[1]])

        def J(x):
            return np.array([[2 * x[0], 2 * x[1]], [1.0, -1.0]])

        root = newton_root(F, J, np.array([1.0, 0.5]))
        assert np.max(np.abs(F(root))) < 1e-12

    def test_divergence_raises(self):
        with pytest.raises(StageSolverError):
            newton_root(
                lambda x: np.array([1.0 + x[0] ** 2]),  # no real root
                lambda x: np.array([[2.0 * x[0]]]),
                np.array([1.0]),
                max_iter=10,
            )


class TestReferenceTrajectory:
    def test_uniform_grid(self):
        lin = get_system("linear")
        traj = reference_trajectory(lin, np.array([0.0]), 0.0, 1.0, 0.02)
        assert len(traj.times) == 51
        np.testing.assert_allclose(np.diff(traj.times), 0.02, rtol=1e-12)
        exact = exact_linear_solution(100.0, 0.0, 0.0, traj.times)
        assert np.max(np.abs(traj.states[:, 0] - exact)) < 1e-9

    def test_stiff_flag_switches_integrator(self):
        lin = get_system("linear", lam=1e5)
        traj = reference_trajectory(lin, np.array([0.0]), 0.0, 0.001, 0.0005,
                                    stiff=True, rtol=1e-8)
        exact = exact_linear_solution(1e5, 0.0, 0.0, traj.times)
        assert np.max(np.abs(traj.states[:, 0] - exact)) < 1e-5


class TestTolerances:
    def test_must_be_positive(self):
        with pytest.raises(ValueError):
            Tolerances(atol=0.0)
        with pytest.raises(ValueError):
            Tolerances(rtol=-1e-3)
