"""Classical integrators and shared root/linear solvers.

These serve as oracles and baselines: a fixed-step RK4, an adaptive embedded
Dormand-Prince 5(4) pair for non-stiff references, and an adaptive two-stage
L-stable SDIRK2 (gamma = 1 - sqrt(2)/2) for stiff references.  All of them
hit requested grid times exactly by clamping steps (no dense-output
interpolation), so grid values carry no interpolation error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import LinearSolverError, NumericError, StageSolverError, StiffnessError
from .odecore import IvpSystem, Trajectory

Array = np.ndarray

DIRK_GAMMA = 1.0 - np.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class Tolerances:
    atol: float = 1e-12
    rtol: float = 1e-12

    def __post_init__(self):
        if self.atol <= 0 or self.rtol <= 0:
            raise ValueError("tolerances must be positive")


class ConditioningWarning(UserWarning):
    """Linear system close to singular for double precision."""


def solve_linear(A: Array, b: Array, cond_warn: float = 1e8) -> Array:
    """Solve Ax = b with partial pivoting; warn when badly conditioned."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if A.shape[0] <= 500:
        c = np.linalg.cond(A)
        if not np.isfinite(c) or c > cond_warn:
            warnings.warn(
                f"linear system condition number {c:.2e} exceeds {cond_warn:.0e}",
                ConditioningWarning,
                stacklevel=2,
            )
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise LinearSolverError(f"singular linear system: {exc}") from exc


def newton_root(F, J, x0: Array, tol: float = 1e-12, max_iter: int = 50) -> Array:
    """Damped Newton for F(x) = 0 with analytic Jacobian J(x).

    Accepts a step only if it does not increase ||F||_inf, halving up to 30
    times otherwise.  Returns x with ||F(x)||_inf <= tol.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    fx = np.atleast_1d(np.asarray(F(x), dtype=float))
    norm = np.max(np.abs(fx))
    for _ in range(max_iter):
        if norm <= tol:
            return x
        Jx = np.atleast_2d(np.asarray(J(x), dtype=float))
        try:
            step = np.linalg.solve(Jx, -fx)
        except np.linalg.LinAlgError as exc:
            raise StageSolverError(f"singular Jacobian in Newton: {exc}") from exc
        alpha = 1.0
        for _ in range(30):
            x_new = x + alpha * step
            f_new = np.atleast_1d(np.asarray(F(x_new), dtype=float))
            norm_new = np.max(np.abs(f_new)) if np.all(np.isfinite(f_new)) else np.inf
            if norm_new < norm or norm_new <= tol:
                break
            alpha *= 0.5
        else:
            raise StageSolverError("Newton line search failed to reduce the residual")
        x, fx, norm = x_new, f_new, norm_new
    if norm <= tol:
        return x
    raise StageSolverError(
        f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})"
    )


# -- fixed-step RK4 ---------------------------------------------------------


def rk4_step(system: IvpSystem, y: Array, t: float, h: float) -> Array:
    k1 = system.eval_rhs(y, t)
    k2 = system.eval_rhs(y + 0.5 * h * k1, t + 0.5 * h)
    k3 = system.eval_rhs(y + 0.5 * h * k2, t + 0.5 * h)
    k4 = system.eval_rhs(y + h * k3, t + h)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_fixed(system: IvpSystem, y0: Array, t0: float, tf: float, h: float) -> Trajectory:
    """Classic 4-stage Runge-Kutta with the final step clamped to land on tf."""
    if h <= 0:
        raise ValueError("h must be positive")
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    times = [t0]
    states = [y.copy()]
    t = t0
    while t < tf - 1e-14 * max(1.0, abs(tf)):
        step = min(h, tf - t)
        y = rk4_step(system, y, t, step)
        if not np.all(np.isfinite(y)):
            raise NumericError(f"non-finite state at t={t + step}")
        t += step
        times.append(t)
        states.append(y.copy())
    return Trajectory(np.array(times), np.array(states))


# -- adaptive embedded Dormand-Prince 5(4) -----------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b5 - b4: weights of the embedded error estimate
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


def _initial_step(system, y0, t0, f0, direction, p, tol: Tolerances):
    # standard starting-step heuristic: match the scale of y'/y''
    sc = tol.atol + tol.rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = system.eval_rhs(y1, t0 + h0 * direction)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (p + 1))
    return min(100 * h0, h1)


def _error_norm(err, y_old, y_new, tol: Tolerances):
    sc = tol.atol + tol.rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / sc) ** 2)))


class _GridRecorder:
    """Collects states at requested grid times (or every step when grid is None)."""

    def __init__(self, grid, t0, tf, y0):
        self.times = [t0]
        self.states = [np.array(y0, dtype=float)]
        if grid is None:
            self.targets = None
        else:
            grid = np.asarray(grid, dtype=float)
            if grid.size and (grid[0] < t0 - 1e-12 or grid[-1] > tf + 1e-12):
                raise ValueError("grid times must lie within [t0, tf]")
            self.targets = [g for g in grid if g > t0 + 1e-14 * max(1.0, abs(t0))]

    def next_target(self, tf):
        if self.targets is None or not self.targets:
            return tf
        return self.targets[0]

    def record(self, t, y):
        if self.targets is None:
            self.times.append(t)
            self.states.append(y.copy())
        elif self.targets and abs(t - self.targets[0]) <= 1e-12 * max(1.0, abs(t)):
            self.times.append(self.targets.pop(0))
            self.states.append(y.copy())

    def trajectory(self):
        return Trajectory(np.array(self.times), np.array(self.states))


def dp54_adaptive(
    system: IvpSystem,
    y0: Array,
    t0: float,
    tf: float,
    tol: Tolerances = Tolerances(),
    grid=None,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Embedded Dormand-Prince 5(4) with PI step control.

    Steps are clamped so every requested grid time is hit exactly.  Raises
    StiffnessError on step underflow or when the step budget is exhausted,
    the expected outcome on stiff problems.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    if tf == t0:
        return Trajectory([t0], [y])
    if tf < t0:
        raise ValueError("backward spans are not supported")
    rec = _GridRecorder(grid, t0, tf, y)

    t = t0
    f_first = system.eval_rhs(y, t)
    h = min(_initial_step(system, y, t, f_first, 1.0, 5, tol), tf - t0)
    err_prev = 1.0
    safety, p = 0.9, 5.0
    hmin = 1e-14 * max(1.0, abs(tf - t0))
    n_steps = 0
    k = np.empty((7, y.size))
    k[0] = f_first

    while t < tf - 1e-14 * max(1.0, abs(tf)):
        if n_steps >= max_steps:
            raise StiffnessError(
                f"step budget {max_steps} exhausted at t={t:.6g}; problem appears stiff"
            )
        target = rec.next_target(tf)
        # treat near-hits as hits so roundoff never leaves an unsteppable sliver
        clamped = h >= (target - t) * (1.0 - 1e-10)
        h_use = (target - t) if clamped else h
        if h_use < hmin:
            raise StiffnessError(f"step size underflow at t={t:.6g}")

        for i in range(1, 6):
            yi = y + h_use * (_DP_A[i - 1] @ k[:i])
            k[i] = system.eval_rhs(yi, t + _DP_C[i] * h_use)
        y_new = y + h_use * (_DP_B5[:6] @ k[:6])
        k[6] = system.eval_rhs(y_new, t + h_use)  # FSAL stage
        err_vec = h_use * (_DP_E @ k)
        if not np.all(np.isfinite(y_new)):
            err = np.inf
        else:
            err = _error_norm(err_vec, y, y_new, tol)
        n_steps += 1

        if err <= 1.0:
            t = target if clamped else t + h_use
            y = y_new
            k[0] = k[6]
            rec.record(t, y)
            e = max(err, 1e-10)
            factor = safety * e ** (-0.7 / p) * err_prev ** (0.4 / p)
            err_prev = e
            h = h_use * min(10.0, max(0.2, factor))
        else:
            h = h_use * max(0.2, safety * err ** (-1.0 / p))
    return rec.trajectory()


# -- adaptive SDIRK2 ----------------------------------------------------------


def _dirk_stage(system, y_base, t_stage, h, gamma, K_guess, tol_newton=1e-11):
    """Solve K = f(y_base + gamma*h*K, t_stage) by Newton with analytic jac_y."""
    K = np.array(K_guess, dtype=float)
    for _ in range(50):
        G = y_base + gamma * h * K
        g = K - system.eval_rhs(G, t_stage)
        A = np.eye(K.size) - gamma * h * system.eval_jac_y(G, t_stage)
        try:
            dK = np.linalg.solve(A, -g)
        except np.linalg.LinAlgError as exc:
            raise StageSolverError(f"singular stage system: {exc}") from exc
        K += dK
        if np.max(np.abs(dK)) <= tol_newton * (1.0 + np.max(np.abs(K))):
            return K
    raise StageSolverError("DIRK stage Newton did not converge in 50 iterations")


def sdirk2_step(system: IvpSystem, y: Array, t: float, h: float):
    """One step of the two-stage, stiffly accurate, L-stable SDIRK2.

    Returns (y_new, err_estimate) where the estimate is the difference
    against the embedded first-order solution, filtered by
    (I - gamma*h*J)^{-1} to stay meaningful in stiff transients.
    """
    g = DIRK_GAMMA
    f_now = system.eval_rhs(y, t)
    K1 = _dirk_stage(system, y, t + g * h, h, g, f_now)
    base2 = y + (1.0 - g) * h * K1
    K2 = _dirk_stage(system, base2, t + h, h, g, K1)
    y_new = base2 + g * h * K2
    raw = g * h * (K2 - K1)
    A = np.eye(y.size) - g * h * system.eval_jac_y(y_new, t + h)
    try:
        err = np.linalg.solve(A, raw)
    except np.linalg.LinAlgError:
        err = raw
    return y_new, err


def sdirk2_adaptive(
    system: IvpSystem,
    y0: Array,
    t0: float,
    tf: float,
    tol: Tolerances = Tolerances(1e-10, 1e-10),
    grid=None,
    max_steps: int = 10_000_000,
) -> Trajectory:
    """Adaptive SDIRK2; the stiff reference integrator."""
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    if tf == t0:
        return Trajectory([t0], [y])
    if tf < t0:
        raise ValueError("backward spans are not supported")
    rec = _GridRecorder(grid, t0, tf, y)

    t = t0
    f0 = system.eval_rhs(y, t)
    h = min(_initial_step(system, y, t, f0, 1.0, 2, tol), tf - t0)
    safety, p = 0.9, 2.0
    hmin = 1e-15 * max(1.0, abs(tf - t0))
    err_prev = 1.0
    n_steps = 0

    while t < tf - 1e-14 * max(1.0, abs(tf)):
        if n_steps >= max_steps:
            raise NumericError(f"step budget {max_steps} exhausted at t={t:.6g}")
        target = rec.next_target(tf)
        clamped = h >= (target - t) * (1.0 - 1e-10)
        h_use = (target - t) if clamped else h
        if h_use < hmin:
            raise StiffnessError(f"step size underflow at t={t:.6g}")
        try:
            y_new, err_vec = sdirk2_step(system, y, t, h_use)
            err = (
                _error_norm(err_vec, y, y_new, tol)
                if np.all(np.isfinite(y_new))
                else np.inf
            )
        except StageSolverError:
            err = np.inf
            y_new = y
        n_steps += 1

        if err <= 1.0:
            t = target if clamped else t + h_use
            y = y_new
            rec.record(t, y)
            e = max(err, 1e-10)
            factor = safety * e ** (-0.7 / p) * err_prev ** (0.4 / p)
            err_prev = e
            h = h_use * min(10.0, max(0.2, factor))
        else:
            h = h_use * max(0.1, safety * (min(err, 1e10)) ** (-1.0 / p))
    return rec.trajectory()


def reference_trajectory(
    system: IvpSystem,
    y0: Array,
    t0: float,
    tf: float,
    dt: float,
    stiff: bool = False,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> Trajectory:
    """High-accuracy reference on the uniform grid t0, t0+dt, ..., tf."""
    n_pts = int(round((tf - t0) / dt))
    grid = t0 + dt * np.arange(n_pts + 1)
    grid[-1] = min(grid[-1], tf)
    tol = Tolerances(atol=atol, rtol=rtol)
    if stiff:
        return sdirk2_adaptive(system, y0, t0, tf, tol, grid=grid)
    return dp54_adaptive(system, y0, t0, tf, tol, grid=grid)
