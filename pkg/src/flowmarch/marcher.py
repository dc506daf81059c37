"""Time marching with trained flow-map models.

A march is nothing more than repeated evaluation of the learned map:
y_{k+1} = psi(y_k, t_k, h).  Accuracy is fixed at training time; changing
the step within (0, h_max] mainly changes how many evaluations reach tf,
not the error.  This module adds the bookkeeping around that idea:
sub-domain dispatch for decomposed models, modulo reduction when the
system is periodic in time or in single state components, the implicit
solve for backward-trained maps, and the quasi-adaptive stepping rule
h = safety * h_max of the current sub-domain.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .decomp import DecomposedModel, locate
from .errors import FlowmarchError, OutOfDomainError
from .fasteval import cached_evaluator
from .odecore import Trajectory
from .psirep import PsiModel
from .refsolve import newton_root

Array = np.ndarray

log = logging.getLogger(__name__)

_TINY = 1e-12


@dataclass(frozen=True)
class MarchConfig:
    """How to march: fixed steps of dt, or quasi-adaptive per-sub-domain.

    t_span is the closed interval [t_start, t_final].  periodicity_exploit
    None means "use modulo reduction whenever the system declares periodic
    metadata"; True insists on it (error when no metadata), False disables
    it.  allow_extrapolation lets steps leave the training box with a
    logged warning instead of an error.
    """

    t_span: tuple
    mode: str = "fixed"
    dt: Optional[float] = None
    safety: float = 0.95
    periodicity_exploit: Optional[bool] = None
    allow_extrapolation: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "quasi_adaptive"):
            raise ValueError("mode must be 'fixed' or 'quasi_adaptive'")
        lo, hi = float(self.t_span[0]), float(self.t_span[1])
        if hi < lo:
            raise ValueError("t_span must satisfy t_start <= t_final")
        object.__setattr__(self, "t_span", (lo, hi))
        if self.mode == "fixed":
            if self.dt is None or self.dt <= 0:
                raise ValueError("fixed mode requires dt > 0")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")


class StepRecord(NamedTuple):
    """One quasi-adaptive step: start time, step size, governing cell."""

    t: float
    h: float
    cell: int


def _is_decomposed(model) -> bool:
    return isinstance(model, DecomposedModel)


def _system_of(model):
    return model.system


def _global_box(model) -> Array:
    if _is_decomposed(model):
        return model.partition.y0_box
    return model.domain.y0_box


def _global_t0_interval(model):
    if _is_decomposed(model):
        return model.partition.t0_interval
    return model.domain.t0_interval


def _local(model, y, t):
    """(local model, subdomain h_max, cell id) governing the point."""
    if _is_decomposed(model):
        cid = locate(model.partition, y, t)
        return model.models[cid], model.subdomains[cid].h_max_local, cid
    return model, model.domain.h_max, 0


def _dispatch(model, y, t, allow: bool):
    """_local plus the out-of-domain policy (error, or warn-and-proceed)."""
    if _is_decomposed(model):
        try:
            return _local(model, y, t)
        except OutOfDomainError:
            if not allow:
                raise
            log.warning("extrapolating outside the partition at t=%.6g", t)
            return _nearest_local(model, y, t)
    dom = model.domain
    t_chk = None if dom.t0_interval is None else t
    if not dom.contains(y, t_chk):
        if not allow:
            raise OutOfDomainError(
                f"point outside the training box (y={y}, t={t})",
                point=(np.asarray(y), t),
            )
        log.warning("extrapolating outside the training box at t=%.6g", t)
    return model, model.domain.h_max, 0


def step(model, y_k, t_k: float, h: float, allow_extrapolation: bool = False) -> Array:
    """Advance one step: y_{k+1} = psi(y_k, t_k, h), without wrapping.

    Forward-trained models evaluate the map directly (implicit kinds run
    their stage solves inside the baseline).  Backward-trained models
    solve psi(y_{k+1}, t_k + h, -h) = y_k with Newton from an explicit
    Euler predictor.
    """
    y = np.asarray(y_k, dtype=float)
    local, h_cap, _ = _dispatch(model, y, t_k, allow_extrapolation)
    if not 0 < h <= h_cap * (1 + 1e-12):
        raise ValueError(f"step h={h} outside (0, h_max={h_cap}]")
    return _advance(local, y, t_k, h)


def _nearest_local(model, y, t):
    """Clamp the point into the partition box and dispatch from there."""
    box = model.partition.y0_box
    y_in = np.minimum(np.maximum(y, box[:, 0]), box[:, 1])
    t_in = t
    if model.partition.t0_interval is not None:
        lo, hi = model.partition.t0_interval
        t_in = min(max(t, lo), hi)
    cid = locate(model.partition, y_in, t_in)
    return model.models[cid], model.subdomains[cid].h_max_local, cid


def _advance(local: PsiModel, y: Array, t: float, h: float) -> Array:
    ev = cached_evaluator(local)
    if local.domain.xi_sign == "forward":
        return ev(y, t, h)
    # backward-trained: the map runs in negative xi, so the forward state
    # is the root of psi(z, t + h, -h) = y
    n = local.system.dim
    t_next = t + h

    def F(z):
        return ev(z, t_next, -h) - y

    def J(z):
        Jm = np.empty((n, n))
        for j in range(n):
            d = 1e-6 * max(1.0, abs(z[j]))
            zp = z.copy()
            zm = z.copy()
            zp[j] += d
            zm[j] -= d
            Jm[:, j] = (ev(zp, t_next, -h) - ev(zm, t_next, -h)) / (2.0 * d)
        return Jm

    z0 = y + h * local.system.eval_rhs(y, t)
    return newton_root(F, J, z0, tol=1e-12, max_iter=50)


def _wrap(model, y, t):
    """(y*, t*, offset) with y = y* + offset and psi-arguments in the box."""
    system = _system_of(model)
    y = np.asarray(y, dtype=float)
    offset = np.zeros_like(y)

    t_star = t
    if system.temporal_period is not None and not system.autonomous:
        T = system.temporal_period
        interval = _global_t0_interval(model)
        anchor = interval[0] if interval is not None else 0.0
        t_star = anchor + math.fmod(t - anchor, T)
        if t_star < anchor:
            t_star += T

    L = system.periodicity_vector
    if L is not None and np.any(L > 0):
        box = _global_box(model)
        y_star = y.copy()
        for i, Li in enumerate(L):
            width = box[i, 1] - box[i, 0]
            if Li <= 0 or width < Li:
                continue  # box too narrow to hold one full period
            a = 0.5 * (box[i, 0] + box[i, 1]) - Li / 2.0
            q = math.floor((y[i] - a) / Li)
            y_star[i] = y[i] - q * Li
            offset[i] = q * Li
        y = y_star
    return y, t_star, offset


def step_periodic(model, y_k, t_k: float, h: float,
                  allow_extrapolation: bool = False) -> Array:
    """Step with modulo reduction of t and of periodic state components.

    Time is reduced to one period above the trained t0 window; each state
    component with period L_i > 0 is reduced into an L_i-wide window
    centred on the training box (for a box centred at 0 with L = 2*pi this
    is the [-pi, pi) convention), provided the box is at least one period
    wide.  The integer multiples removed are added back to the result, so
    the returned state continues the unwrapped trajectory.
    """
    system = _system_of(model)
    has_temporal = system.temporal_period is not None and not system.autonomous
    has_state = system.periodicity_vector is not None and bool(
        np.any(system.periodicity_vector > 0)
    )
    if not (has_temporal or has_state):
        raise ValueError(
            f"system {system.name!r} declares no periodicity metadata"
        )
    y_star, t_star, offset = _wrap(model, np.asarray(y_k, dtype=float), t_k)
    return step(model, y_star, t_star, h, allow_extrapolation) + offset


def _use_wrap(model, flag: Optional[bool]) -> bool:
    system = _system_of(model)
    has_meta = (system.temporal_period is not None and not system.autonomous) or (
        system.periodicity_vector is not None
        and bool(np.any(system.periodicity_vector > 0))
    )
    if flag is None:
        return has_meta
    if flag and not has_meta:
        raise ValueError(
            f"periodicity_exploit requested but system {system.name!r} "
            "declares no periodicity metadata"
        )
    return flag


def march(model, y0, t0: float, config: MarchConfig) -> Trajectory:
    """Fixed-step march over config.t_span; records every state.

    Times are t0 + k*dt with the final step clamped to land exactly on
    t_final.  Decomposed models re-dispatch by sub-domain every step.
    """
    lo, hi = config.t_span
    if abs(t0 - lo) > _TINY * max(1.0, abs(lo)):
        raise ValueError(f"t0={t0} does not match config.t_span start {lo}")
    if config.mode != "fixed":
        return march_quasi_adaptive(
            model, y0, t0, hi,
            safety=config.safety,
            periodicity_exploit=config.periodicity_exploit,
            allow_extrapolation=config.allow_extrapolation,
        )
    dt = config.dt
    wrap = _use_wrap(model, config.periodicity_exploit)

    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    times = [t0]
    states = [y.copy()]
    if hi > lo:
        span = hi - lo
        n_full = int(math.floor(span / dt + _TINY))
        grid = [t0 + k * dt for k in range(n_full + 1)]
        if hi - grid[-1] > _TINY * max(1.0, abs(hi)):
            grid.append(hi)
        else:
            grid[-1] = hi
        for k in range(len(grid) - 1):
            t, t_next = grid[k], grid[k + 1]
            h = t_next - t
            try:
                if wrap:
                    y = step_periodic(model, y, t, h, config.allow_extrapolation)
                else:
                    y = step(model, y, t, h, config.allow_extrapolation)
            except FlowmarchError as exc:
                raise type(exc)(
                    f"march failed at step {k + 1} (t={t:.10g}, y={y}): {exc}"
                ) from exc
            times.append(t_next)
            states.append(y.copy())
    return Trajectory(times, np.array(states))


def march_quasi_adaptive(
    model,
    y0,
    t0: float,
    tf: float,
    safety: float = 0.95,
    periodicity_exploit: Optional[bool] = None,
    allow_extrapolation: bool = False,
    step_log: Optional[list] = None,
) -> Trajectory:
    """March with h = safety * h_max of the current sub-domain.

    The final step is clamped to land exactly on tf.  When `step_log` is a
    list, one StepRecord per step is appended (useful for verifying the
    stepping rule).
    """
    if tf < t0:
        raise ValueError("tf must be >= t0")
    wrap = _use_wrap(model, periodicity_exploit)
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    times = [t0]
    states = [y.copy()]
    t = t0
    k = 0
    while t < tf - _TINY * max(1.0, abs(tf)):
        if wrap:
            y_star, t_star, offset = _wrap(model, y, t)
        else:
            y_star, t_star, offset = y, t, 0.0
        try:
            local, h_local, cid = _dispatch(model, y_star, t_star, allow_extrapolation)
            h = safety * h_local
            if t + h > tf:
                h = tf - t
            y = _advance(local, y_star, t_star, h) + offset
        except FlowmarchError as exc:
            raise type(exc)(
                f"quasi-adaptive march failed at step {k + 1} "
                f"(t={t:.10g}, y={y}): {exc}"
            ) from exc
        if step_log is not None:
            step_log.append(StepRecord(t=t, h=h, cell=cid))
        t = t + h
        k += 1
        times.append(t)
        states.append(y.copy())
    return Trajectory(times, np.array(states))
