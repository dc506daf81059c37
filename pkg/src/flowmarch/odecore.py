"""Problem definitions, training domains, trajectories, and error metrics.

An :class:`IvpSystem` bundles a right-hand side f(y, t) with its analytic
Jacobians and optional periodicity metadata (temporal period T, per-component
state periods L_i).  Everything downstream (training, marching, reference
integration) consumes this one type.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError

Array = np.ndarray

# Grid times are compared with this absolute slack: step sums accumulate
# roundoff of order eps*t.
TIME_GRID_ATOL = 1e-12


@dataclass(frozen=True)
class IvpSystem:
    """An initial-value problem dy/dt = f(y, t) with analytic Jacobians.

    Parameters
    ----------
    dim : int
        State dimension n.
    rhs : callable
        f(y, t) -> array of shape (..., n).  Must broadcast over a leading
        batch axis when ``vectorized`` is True (all catalog systems do).
    jac_y : callable
        df/dy -> (..., n, n).
    jac_t : callable
        df/dt -> (..., n).  Zero for autonomous systems.
    autonomous : bool
        True when f ignores t (the learned map then has no t0 input).
    temporal_period : float or None
        T > 0 with f(y, t+T) = f(y, t), when such a period exists.
    periodicity_vector : array or None
        L with L_i >= 0 and f(y + L_i e_i, t) = f(y, t); zeros mark
        non-periodic components.  None means all zeros.
    name : str
        Label used in reports and model files.

    Notes
    -----
    Smoothness of f on the training box (enough for a well-defined flow map,
    with a unique solution for all t of interest) is a caller obligation;
    there is no runtime check.
    """

    dim: int
    rhs: Callable[[Array, float], Array]
    jac_y: Callable[[Array, float], Array]
    jac_t: Callable[[Array, float], Array]
    autonomous: bool = False
    temporal_period: Optional[float] = None
    periodicity_vector: Optional[Array] = None
    name: str = "system"
    vectorized: bool = True
    # Set for catalog systems so trained models can be re-materialized from
    # a saved file without pickling callables.
    catalog_key: Optional[str] = None
    catalog_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.temporal_period is not None and self.temporal_period <= 0:
            raise ValueError("temporal_period must be positive when set")
        if self.periodicity_vector is not None:
            L = np.asarray(self.periodicity_vector, dtype=float)
            if L.shape != (self.dim,):
                raise ValueError("periodicity_vector must have length dim")
            if np.any(L < 0):
                raise ValueError("periodicity_vector entries must be >= 0")
            object.__setattr__(self, "periodicity_vector", L)

    # -- evaluation ---------------------------------------------------------

    def eval_rhs(self, y: Array, t) -> Array:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ValueError(
                f"state has dimension {y.shape[-1]}, system expects {self.dim}"
            )
        if y.ndim == 1 or self.vectorized:
            return np.asarray(self.rhs(y, t), dtype=float)
        return self._loop(self.rhs, y, t, (self.dim,))

    def eval_jac_y(self, y: Array, t) -> Array:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1 or self.vectorized:
            return np.asarray(self.jac_y(y, t), dtype=float)
        return self._loop(self.jac_y, y, t, (self.dim, self.dim))

    def eval_jac_t(self, y: Array, t) -> Array:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1 or self.vectorized:
            return np.asarray(self.jac_t(y, t), dtype=float)
        return self._loop(self.jac_t, y, t, (self.dim,))

    def _loop(self, fn, y, t, out_shape):
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), y.shape[:-1])
        out = np.empty(y.shape[:-1] + out_shape)
        for idx in np.ndindex(y.shape[:-1]):
            out[idx] = fn(y[idx], float(t_arr[idx]))
        return out


def fd_jac_y(rhs: Callable[[Array, float], Array]) -> Callable[[Array, float], Array]:
    """Central-difference df/dy for user systems without an analytic Jacobian."""

    def jac(y, t):
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        J = np.empty(y.shape[:-1] + (n, n))
        for j in range(n):
            h = 1e-6 * max(1.0, float(np.max(np.abs(y[..., j]))))
            yp = y.copy()
            ym = y.copy()
            yp[..., j] += h
            ym[..., j] -= h
            J[..., :, j] = (np.asarray(rhs(yp, t)) - np.asarray(rhs(ym, t))) / (2 * h)
        return J

    return jac


def fd_jac_t(rhs: Callable[[Array, float], Array]) -> Callable[[Array, float], Array]:
    """Central-difference df/dt companion to :func:`fd_jac_y`."""

    def jac(y, t):
        h = 1e-6 * max(1.0, abs(float(t)))
        return (np.asarray(rhs(y, t + h)) - np.asarray(rhs(y, t - h))) / (2 * h)

    return jac


def check_system(
    system: IvpSystem,
    box: Optional[Array] = None,
    t_range=(0.0, 1.0),
    samples: int = 100,
    seed: int = 0,
    jac_rtol: float = 1e-6,
    period_tol: float = 1e-12,
) -> None:
    """Spot-check the declared metadata of a system at random states.

    Verifies, at ``samples`` random (y, t) draws:

    * autonomy: f(y, t1) = f(y, t2) exactly;
    * temporal periodicity: f(y, t+T) = f(y, t) within ``period_tol``;
    * state periodicity: f(y + L_i e_i, t) = f(y, t) within ``period_tol``;
    * jac_y against central finite differences within relative ``jac_rtol``.

    Raises AssertionError on the first violation.  Intended for catalog
    validation and user-system sanity checks, not hot paths.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    if box is None:
        box = np.array([[-1.0, 1.0]] * system.dim)
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]

    for _ in range(samples):
        y = lo + (hi - lo) * rng.random(system.dim)
        t = t_range[0] + (t_range[1] - t_range[0]) * rng.random()
        f0 = system.eval_rhs(y, t)

        if system.autonomous:
            t2 = t_range[0] + (t_range[1] - t_range[0]) * rng.random()
            f2 = system.eval_rhs(y, t2)
            assert np.array_equal(f0, f2), (
                f"{system.name}: declared autonomous but f differs at t={t}, {t2}"
            )
        if system.temporal_period is not None:
            fT = system.eval_rhs(y, t + system.temporal_period)
            err = np.max(np.abs(fT - f0))
            assert err <= period_tol + period_tol * np.max(np.abs(f0)), (
                f"{system.name}: temporal period violated, err={err:.3e}"
            )
        if system.periodicity_vector is not None:
            for i, L in enumerate(system.periodicity_vector):
                if L == 0:
                    continue
                ys = y.copy()
                ys[i] += L
                fL = system.eval_rhs(ys, t)
                err = np.max(np.abs(fL - f0))
                assert err <= period_tol + period_tol * np.max(np.abs(f0)), (
                    f"{system.name}: state period L_{i}={L} violated, err={err:.3e}"
                )

        J = system.eval_jac_y(y, t)
        J_fd = fd_jac_y(system.rhs)(y, t)
        scale = max(1.0, float(np.max(np.abs(J_fd))))
        err = np.max(np.abs(J - J_fd)) / scale
        assert err <= jac_rtol, (
            f"{system.name}: jac_y disagrees with finite differences, "
            f"rel err={err:.3e} at y={y}, t={t}"
        )


@dataclass(frozen=True)
class TrainingDomain:
    """The box a flow-map model is trained on.

    y0_box is an (n, 2) array of [a_i, b_i]; t0_interval is [T0, Tf] and must
    be None exactly when the system is autonomous; h_max bounds the step-size
    input; xi_sign selects forward (xi in [0, h_max]) or backward
    (xi in [-h_max, 0]) learning.
    """

    y0_box: Array
    t0_interval: Optional[tuple] = None
    h_max: float = 0.1
    xi_sign: str = "forward"

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.y0_box, dtype=float))
        if box.shape[1] != 2:
            raise ValueError("y0_box must be an (n, 2) array of [a_i, b_i] pairs")
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("y0_box requires a_i < b_i in every component")
        object.__setattr__(self, "y0_box", box)
        if self.t0_interval is not None:
            lo, hi = float(self.t0_interval[0]), float(self.t0_interval[1])
            if not lo < hi:
                raise ValueError("t0_interval requires T0 < Tf")
            object.__setattr__(self, "t0_interval", (lo, hi))
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")
        if self.xi_sign not in ("forward", "backward"):
            raise ValueError("xi_sign must be 'forward' or 'backward'")

    @property
    def dim(self) -> int:
        return self.y0_box.shape[0]

    def xi_interval(self) -> tuple:
        if self.xi_sign == "forward":
            return (0.0, self.h_max)
        return (-self.h_max, 0.0)

    def contains(self, y: Array, t: Optional[float] = None, atol: float = 0.0) -> bool:
        y = np.asarray(y, dtype=float)
        if np.any(y < self.y0_box[:, 0] - atol) or np.any(y > self.y0_box[:, 1] + atol):
            return False
        if self.t0_interval is not None and t is not None:
            if t < self.t0_interval[0] - atol or t > self.t0_interval[1] + atol:
                return False
        return True


class Trajectory:
    """Time-stamped states: times t_0 < ... < t_m, states[k] = y(t_k)."""

    __slots__ = ("times", "states")

    def __init__(self, times: Sequence[float], states: Array):
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if times.ndim != 1 or states.shape[0] != times.shape[0]:
            raise ValueError("times and states must have equal leading length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.times = times
        self.states = states

    def __len__(self):
        return self.times.size

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def final_state(self) -> Array:
        return self.states[-1]

    def to_csv(self, path) -> None:
        """Write t, y_1..y_n rows with 17 significant digits (round-trips f64)."""
        n = self.dim
        header = "t," + ",".join(f"y{i + 1}" for i in range(n))
        with open(path, "w", encoding="ascii") as fh:
            fh.write(header + "\n")
            for t, y in zip(self.times, self.states):
                row = [format(t, ".17g")] + [format(v, ".17g") for v in y]
                fh.write(",".join(row) + "\n")

    @staticmethod
    def from_csv(path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return Trajectory(data[:, 0], data[:, 1:])


@dataclass(frozen=True)
class ErrorReport:
    """Maximum and root-mean-square trajectory errors plus a wall time."""

    e_max: float
    e_rms: float
    wall_time_seconds: float = 0.0

    def __post_init__(self):
        if self.e_max < 0 or self.e_rms < 0 or self.wall_time_seconds < 0:
            raise ValueError("error-report fields must be nonnegative")


def error_metrics(
    candidate: Trajectory, reference: Trajectory, wall_time_seconds: float = 0.0
) -> ErrorReport:
    """Compare two trajectories on an identical time grid.

    e_max  = max_{i,j} |y_i^c(t_j) - y_i^ref(t_j)|
    e_rms  = sqrt( (1/(m n)) sum_{i,j} |y_i^c(t_j) - y_i^ref(t_j)|^2 )
    """
    if candidate.dim != reference.dim:
        raise ValueError("trajectory dimensions differ")
    if len(candidate) != len(reference) or not np.allclose(
        candidate.times, reference.times, rtol=0.0, atol=TIME_GRID_ATOL
    ):
        raise ValueError("trajectories are not on the same time grid")
    diff = np.abs(candidate.states - reference.states)
    if not np.all(np.isfinite(diff)):
        raise NumericError("non-finite states in trajectory comparison")
    e_max = float(np.max(diff))
    e_rms = float(np.sqrt(np.mean(diff**2)))
    return ErrorReport(e_max=e_max, e_rms=e_rms, wall_time_seconds=wall_time_seconds)
