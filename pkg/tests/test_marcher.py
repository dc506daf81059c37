"""Tests for fixed and quasi-adaptive marching, wrapping, and dispatch."""

import math

import numpy as np
import pytest

from flowmarch.decomp import build_decomposed
from flowmarch.errors import OutOfDomainError
from flowmarch.marcher import (
    MarchConfig,
    StepRecord,
    march,
    march_quasi_adaptive,
    step,
    step_periodic,
)
from flowmarch.odecore import IvpSystem, TrainingDomain
from flowmarch.psirep import build_model
from flowmarch.trainer import TrainConfig, train_model


def _decay_system(rate=1.0):
    def rhs(y, t):
        return -rate * y

    def jac_y(y, t):
        out = np.empty(y.shape[:-1] + (1, 1))
        out[..., 0, 0] = -rate
        return out

    def jac_t(y, t):
        return np.zeros(y.shape[:-1] + (1,))

    return IvpSystem(1, rhs, jac_y, jac_t, autonomous=True, name="decay")


def _constant_system(temporal_period=None, periodicity_vector=None,
                     autonomous=True, rate=0.0):
    """dy/dt = 1 (or rate); with rate 0 and order-one kind the untrained
    model is already the exact flow map, which isolates the marching logic."""

    def rhs(y, t):
        return np.full_like(y, rate) if rate else np.ones_like(y) * rate

    def jac_y(y, t):
        n = y.shape[-1]
        return np.zeros(y.shape[:-1] + (n, n))

    def jac_t(y, t):
        return np.zeros_like(y)

    return IvpSystem(
        1, rhs, jac_y, jac_t,
        autonomous=autonomous,
        temporal_period=temporal_period,
        periodicity_vector=periodicity_vector,
        name="probe",
    )


def _exact_model(box, h_max, system=None, xi_sign="forward"):
    """Untrained order-one model of a system whose Euler map is exact."""
    system = system if system is not None else _constant_system(rate=0.0)
    t0 = None if system.autonomous else (-0.05, 1.95)
    domain = TrainingDomain(box, t0_interval=t0, h_max=h_max, xi_sign=xi_sign)
    return build_model(system, domain, "exp_s1", M=4, Rm=0.5, seed=0)


def _drift_model(box, h_max):
    return build_model(
        _constant_system(rate=1.0),
        TrainingDomain(box, h_max=h_max),
        "exp_s1", M=4, Rm=0.5, seed=0,
    )


class TestMarchConfig:
    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            MarchConfig(t_span=(0.0, 1.0), mode="adaptive")

    def test_rejects_reversed_span(self):
        with pytest.raises(ValueError, match="t_span"):
            MarchConfig(t_span=(1.0, 0.0), dt=0.1)

    def test_fixed_mode_requires_dt(self):
        with pytest.raises(ValueError, match="dt"):
            MarchConfig(t_span=(0.0, 1.0))

    def test_safety_must_be_a_fraction(self):
        with pytest.raises(ValueError, match="safety"):
            MarchConfig(t_span=(0.0, 1.0), mode="quasi_adaptive", safety=1.0)


class TestStep:
    def test_step_size_must_respect_the_trained_window(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        with pytest.raises(ValueError, match="outside"):
            step(model, [0.0], 0.0, 0.2)
        with pytest.raises(ValueError, match="outside"):
            step(model, [0.0], 0.0, 0.0)
        # h exactly h_max is allowed
        np.testing.assert_array_equal(step(model, [0.3], 0.0, 0.1), [0.3])

    def test_out_of_domain_policy(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        with pytest.raises(OutOfDomainError):
            step(model, [1.5], 0.0, 0.05)
        out = step(model, [1.5], 0.0, 0.05, allow_extrapolation=True)
        np.testing.assert_array_equal(out, [1.5])

    def test_backward_trained_map_is_inverted(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1, xi_sign="backward")
        # identity dynamics: the Newton solve must return the same state
        np.testing.assert_allclose(step(model, [0.25], 0.0, 0.1), [0.25],
                                   rtol=0, atol=1e-12)


class TestFixedMarch:
    def test_grid_snaps_the_final_partial_step(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        traj = march(model, [0.2], 0.0, MarchConfig(t_span=(0.0, 0.05), dt=0.02))
        np.testing.assert_allclose(traj.times, [0.0, 0.02, 0.04, 0.05])
        assert traj.times[-1] == 0.05

    def test_grid_lands_exactly_on_a_commensurate_endpoint(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        traj = march(model, [0.2], 0.0, MarchConfig(t_span=(0.0, 0.06), dt=0.02))
        assert traj.times[-1] == 0.06
        assert len(traj.times) == 4

    def test_start_time_must_match_the_span(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        with pytest.raises(ValueError, match="does not match"):
            march(model, [0.2], 0.5, MarchConfig(t_span=(0.0, 1.0), dt=0.02))

    def test_zero_length_span_returns_the_initial_state(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        traj = march(model, [0.2], 0.0, MarchConfig(t_span=(0.0, 0.0), dt=0.02))
        assert traj.times == [0.0]
        np.testing.assert_array_equal(traj.states, [[0.2]])

    def test_trained_decay_tracks_the_exact_solution(self):
        model = build_model(
            _decay_system(1.0), TrainingDomain([[0.05, 2.0]], h_max=0.1),
            "exp_s1", M=40, Rm=0.5, seed=0,
        )
        train_model(model, TrainConfig(Q=300, seed=0))
        traj = march(model, [1.5], 0.0, MarchConfig(t_span=(0.0, 1.0), dt=0.1))
        exact = 1.5 * np.exp(-np.asarray(traj.times))
        assert np.max(np.abs(traj.states[:, 0] - exact)) < 1e-8
        assert traj.final_state()[0] == traj.states[-1, 0]

    def test_backward_trained_decay_marches_forward(self):
        model = build_model(
            _decay_system(1.0),
            TrainingDomain([[0.05, 2.0]], h_max=0.1, xi_sign="backward"),
            "exp_s1", M=40, Rm=0.5, seed=0,
        )
        train_model(model, TrainConfig(Q=300, seed=0))
        traj = march(model, [1.5], 0.0, MarchConfig(t_span=(0.0, 1.0), dt=0.1))
        exact = 1.5 * np.exp(-np.asarray(traj.times))
        assert np.max(np.abs(traj.states[:, 0] - exact)) < 1e-8

    def test_leaving_the_box_names_the_failing_step(self):
        model = _drift_model([[0.0, 2.0]], h_max=0.1)
        cfg = MarchConfig(t_span=(0.0, 1.0), dt=0.1)
        with pytest.raises(OutOfDomainError, match="march failed at step"):
            march(model, [1.85], 0.0, cfg)
        relaxed = MarchConfig(t_span=(0.0, 1.0), dt=0.1, allow_extrapolation=True)
        traj = march(model, [1.85], 0.0, relaxed)
        np.testing.assert_allclose(traj.states[-1], [2.85], rtol=0, atol=1e-12)


class TestPeriodicStepping:
    def test_state_component_wraps_by_whole_periods(self):
        system = _constant_system(periodicity_vector=[2 * math.pi])
        model = _exact_model([[-3.2, 3.2]], h_max=0.1, system=system)
        # y = 7 lies outside the box; one period down it is inside
        with pytest.raises(OutOfDomainError):
            step(model, [7.0], 0.0, 0.05)
        out = step_periodic(model, [7.0], 0.0, 0.05)
        np.testing.assert_allclose(out, [7.0], rtol=0, atol=1e-12)
        inner = step_periodic(model, [7.0 - 2 * math.pi], 0.0, 0.05)
        np.testing.assert_allclose(out - inner, [2 * math.pi], rtol=0, atol=1e-12)

    def test_time_wraps_modulo_the_forcing_period(self):
        system = _constant_system(temporal_period=2.0, autonomous=False)
        model = _exact_model([[-1.0, 1.0]], h_max=0.1, system=system)
        with pytest.raises(OutOfDomainError):
            step(model, [0.2], 5.3, 0.05)
        out = step_periodic(model, [0.2], 5.3, 0.05)
        np.testing.assert_allclose(out, [0.2], rtol=0, atol=1e-12)

    def test_requires_periodicity_metadata(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        with pytest.raises(ValueError, match="periodicity"):
            step_periodic(model, [0.2], 0.0, 0.05)
        with pytest.raises(ValueError, match="periodicity"):
            march(
                model, [0.2], 0.0,
                MarchConfig(t_span=(0.0, 0.1), dt=0.05, periodicity_exploit=True),
            )

    def test_march_wraps_automatically_when_metadata_exists(self):
        system = _constant_system(temporal_period=2.0, autonomous=False)
        model = _exact_model([[-1.0, 1.0]], h_max=0.1, system=system)
        cfg = MarchConfig(t_span=(0.0, 6.0), dt=0.1)
        traj = march(model, [0.2], 0.0, cfg)
        assert traj.times[-1] == pytest.approx(6.0)
        np.testing.assert_allclose(traj.states[:, 0], 0.2, rtol=0, atol=1e-12)
        # the same march with wrapping disabled dies once t leaves the window
        with pytest.raises(OutOfDomainError):
            march(model, [0.2], 0.0,
                  MarchConfig(t_span=(0.0, 6.0), dt=0.1, periodicity_exploit=False))


class TestQuasiAdaptive:
    def test_rejects_reversed_interval(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        with pytest.raises(ValueError, match="tf"):
            march_quasi_adaptive(model, [0.0], 1.0, 0.0)

    def test_steps_at_safety_times_the_local_cap(self):
        model = _exact_model([[-1.0, 1.0]], h_max=0.1)
        log = []
        traj = march_quasi_adaptive(model, [0.0], 0.0, 1.0, safety=0.95,
                                    step_log=log)
        assert all(isinstance(rec, StepRecord) for rec in log)
        assert all(rec.h == 0.95 * 0.1 for rec in log[:-1])
        assert log[-1].h <= 0.95 * 0.1 + 1e-15
        assert traj.times[-1] == pytest.approx(1.0, abs=1e-12)

    def test_band_dispatch_switches_the_step_size(self):
        dec = build_decomposed(
            _constant_system(rate=1.0),
            [[0.0, 2.0]],
            [0.05, 0.2],
            "exp_s1",
            M=4,
            Rm=0.5,
            seed=0,
            y_boundaries={0: [0.0, 1.0, 2.0]},
        )
        log = []
        traj = march_quasi_adaptive(dec, [0.5], 0.0, 1.2, safety=0.95,
                                    step_log=log)
        cells = [rec.cell for rec in log]
        assert cells[0] == 0 and cells[-1] == 1
        assert cells == sorted(cells)
        for rec in log[:-1]:
            assert rec.h == 0.95 * (0.05 if rec.cell == 0 else 0.2)
        np.testing.assert_allclose(traj.states[-1], [0.5 + 1.2], rtol=1e-12)
        np.testing.assert_allclose(
            np.diff(traj.times), [rec.h for rec in log], rtol=0, atol=1e-15
        )
