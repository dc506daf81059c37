"""Training of the output weights by damped Gauss-Newton least squares.

The solver is a Levenberg-Marquardt variant that always tries the pure
Gauss-Newton step first (damping 0); only if that fails to reduce the
residual does it fall back to damped trials, growing the damping until a
step is accepted.  Linear or near-linear residuals therefore converge in
one step to the exact least-squares solution.  Each damped subproblem is
solved through orthogonal factorizations: one QR of the Jacobian per
iteration, then a complete-orthogonal solve of the stacked
[R; sqrt(damping) I] system per trial, which stays stable for
rank-deficient Jacobians.

On stalls (relative loss drop below 1e-4 for `perturb_trigger` consecutive
iterations) the run stops, and nllsq_perturb restarts it from the best
weights plus uniform noise.  The restart policy here is a stand-in for the
perturbation schemes of the literature this method family comes from; it
keeps the objective fixed (collocation points are never resampled) and
returns the best weights seen across all runs.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .decomp import DecomposedModel
from .errors import NumericError
from .odecore import TrainingDomain
from .psirep import CollocationSet, PsiModel, ResidualAssembler
from .randnet import make_rng

Array = np.ndarray

log = logging.getLogger(__name__)

# a trial step smaller than step_tol*(1+|beta|) that still fails to reduce
# the loss means the iteration cannot make progress at any damping
_DAMPING_CEILING = 1e32


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    perturb_magnitude None means "half the model's Rm" when training a
    model (resolved in train_model); bare gauss_newton/nllsq_perturb calls
    fall back to 0.5.  perturb_trigger counts consecutive accepted
    iterations whose relative loss drop is below 1e-4; 0 disables stall
    detection entirely.
    """

    Q: int
    seed: int = 0
    max_iterations: int = 100
    gradient_tol: float = 1e-10
    step_tol: float = 1e-10
    residual_tol: float = 0.0
    damping_init: float = 1e-3
    perturb_trigger: int = 3
    perturb_magnitude: Optional[float] = None
    max_restarts: int = 4
    log_sink: Optional[Callable[[dict], None]] = None

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.damping_init <= 0:
            raise ValueError("damping_init must be positive")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")


@dataclass(frozen=True)
class TrainReport:
    """Outcome of a training run (possibly spanning several restarts)."""

    residual_norm: float
    iterations: int
    restarts: int
    wall_time_seconds: float
    status: str
    run_best_norms: tuple = ()


STALL_REL_DROP = 1e-4


def sample_collocation(domain: TrainingDomain, Q: int, seed: int,
                       autonomous: bool = False) -> CollocationSet:
    """Q uniform draws of (y0[, t0], xi) over the training box.

    One Philox stream (stream 1 of the seed) drives all draws, in the fixed
    order y0-block, t0, xi, so sets are reproducible bit-for-bit.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    box = domain.y0_box
    if np.any(box[:, 0] >= box[:, 1]):
        raise ValueError("degenerate y0_box: zero width along some component")
    rng = make_rng(seed, stream=1)
    y0 = rng.uniform(box[:, 0], box[:, 1], size=(Q, box.shape[0]))
    t0 = None
    if not autonomous:
        if domain.t0_interval is None:
            raise ValueError("non-autonomous sampling requires a t0_interval")
        T0, Tf = domain.t0_interval
        if T0 >= Tf:
            raise ValueError("degenerate t0_interval")
        t0 = rng.uniform(T0, Tf, size=Q)
    lo, hi = domain.xi_interval()
    if lo >= hi:
        raise ValueError("degenerate xi interval")
    xi = rng.uniform(lo, hi, size=Q)
    return CollocationSet(y0=y0, xi=xi, t0=t0, seed=seed)


def _emit(config: TrainConfig, record: dict) -> None:
    if config.log_sink is not None:
        config.log_sink(record)
    else:
        log.debug("%s", json.dumps(record))


def jsonl_sink(fileobj) -> Callable[[dict], None]:
    """A log sink writing one JSON record per line to an open file."""

    def sink(record: dict) -> None:
        fileobj.write(json.dumps(record) + "\n")

    return sink


def _check_finite(arr: Array, what: str, iteration: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite {what}", iteration=iteration)


def _damped_step(R: Array, qtr: Array, damping: float) -> Array:
    """argmin |R d + qtr|^2 + damping |d|^2 via a stacked orthogonal solve."""
    m = R.shape[1]
    if damping == 0.0:
        A, b = R, -qtr
    else:
        A = np.vstack([R, math.sqrt(damping) * np.eye(m)])
        b = np.concatenate([-qtr, np.zeros(m)])
    delta, *_ = scipy.linalg.lstsq(A, b, lapack_driver="gelsy")
    return delta


def gauss_newton(
    residual_fn: Callable[[Array], Array],
    jacobian_fn: Optional[Callable[[Array], Array]],
    beta0: Array,
    config: TrainConfig,
    combined_fn: Optional[Callable[[Array], tuple]] = None,
    restart_index: int = 0,
):
    """Minimize |residual(beta)|; returns (best beta, TrainReport).

    Termination statuses: residual_tol, gradient_tol, step_tol,
    max_iterations, stalled.  Pass combined_fn returning (residual,
    jacobian) in one evaluation to avoid recomputing shared work.
    """
    if jacobian_fn is None and combined_fn is None:
        raise ValueError("need jacobian_fn or combined_fn")
    t_start = time.perf_counter()
    beta0 = np.asarray(beta0, dtype=float)
    shape = beta0.shape
    x = beta0.ravel().copy()

    def res(v):
        return np.asarray(residual_fn(v.reshape(shape)), dtype=float).ravel()

    r = res(x)
    _check_finite(r, "residual", 0)
    norm = float(np.linalg.norm(r))
    best_norm, best_x = norm, x.copy()
    damping = config.damping_init
    stall_count = 0
    it = 0
    status = "max_iterations"

    while it < config.max_iterations:
        if norm <= config.residual_tol:
            status = "residual_tol"
            break
        if combined_fn is not None:
            r, J = combined_fn(x.reshape(shape))
            r = np.asarray(r, dtype=float).ravel()
        else:
            J = jacobian_fn(x.reshape(shape))
        J = np.asarray(J, dtype=float)
        _check_finite(J, "jacobian", it)
        grad = J.T @ r
        if float(np.max(np.abs(grad))) <= config.gradient_tol:
            status = "gradient_tol"
            break

        Q1, R1 = np.linalg.qr(J)
        qtr = Q1.T @ r

        # trial cascade: pure Gauss-Newton first, then increasing damping
        trial = 0.0
        accepted = False
        while True:
            delta = _damped_step(R1, qtr, trial)
            x_new = x + delta
            r_new = res(x_new)
            _check_finite(r_new, "residual", it)
            norm_new = float(np.linalg.norm(r_new))
            if norm_new < norm:
                accepted = True
                damping = (trial if trial > 0.0 else damping) * 0.3
                break
            step_size = float(np.linalg.norm(delta))
            if step_size <= config.step_tol * (1.0 + float(np.linalg.norm(x))):
                break  # even vanishing steps do not descend
            trial = max(damping, config.damping_init) if trial == 0.0 else trial * 2.0
            if trial > _DAMPING_CEILING:
                break
        if not accepted:
            status = "step_tol"
            break

        prev = norm
        x, r, norm = x_new, r_new, norm_new
        it += 1
        if norm < best_norm:
            best_norm, best_x = norm, x.copy()
        _emit(config, {"iteration": it, "loss": norm, "damping": trial,
                       "restart": restart_index})
        if norm <= config.residual_tol:
            status = "residual_tol"
            break
        rel_drop = (prev - norm) / prev if prev > 0 else 0.0
        if rel_drop < STALL_REL_DROP:
            stall_count += 1
            if config.perturb_trigger and stall_count >= config.perturb_trigger:
                status = "stalled"
                break
        else:
            stall_count = 0
        if float(np.linalg.norm(delta)) <= config.step_tol * (
            1.0 + float(np.linalg.norm(x))
        ):
            status = "step_tol"
            break

    report = TrainReport(
        residual_norm=best_norm,
        iterations=it,
        restarts=0,
        wall_time_seconds=time.perf_counter() - t_start,
        status=status,
        run_best_norms=(best_norm,),
    )
    return best_x.reshape(shape), report


def nllsq_perturb(
    residual_fn: Callable[[Array], Array],
    jacobian_fn: Optional[Callable[[Array], Array]],
    beta0: Array,
    config: TrainConfig,
    combined_fn: Optional[Callable[[Array], tuple]] = None,
    rng: Optional[np.random.Generator] = None,
):
    """gauss_newton plus uniform-noise restarts on stalls.

    Restarts kick in only when a run ends with status "stalled" and the
    loss is still above residual_tol; each restart perturbs the best
    weights seen so far elementwise by Uniform[-mag, mag].  Returns the
    best weights across all runs.
    """
    t_start = time.perf_counter()
    rng = rng if rng is not None else make_rng(config.seed, stream=2)
    mag = config.perturb_magnitude if config.perturb_magnitude is not None else 0.5

    x0 = np.asarray(beta0, dtype=float)
    best_x, best_norm = None, np.inf
    total_iterations = 0
    restarts = 0
    run_best = []
    status = "max_iterations"

    for run in range(config.max_restarts + 1):
        x, rep = gauss_newton(
            residual_fn, jacobian_fn, x0, config,
            combined_fn=combined_fn, restart_index=run,
        )
        total_iterations += rep.iterations
        run_best.append(rep.residual_norm)
        status = rep.status
        if rep.residual_norm < best_norm:
            best_norm, best_x = rep.residual_norm, x.copy()
        if rep.status != "stalled" or best_norm <= config.residual_tol:
            break
        if run == config.max_restarts:
            break
        restarts += 1
        x0 = best_x + rng.uniform(-mag, mag, size=best_x.shape)

    report = TrainReport(
        residual_norm=best_norm,
        iterations=total_iterations,
        restarts=restarts,
        wall_time_seconds=time.perf_counter() - t_start,
        status=status,
        run_best_norms=tuple(run_best),
    )
    return best_x, report


def train_model(model: PsiModel, config: TrainConfig):
    """Fit the output weights on a fresh collocation sample of the domain.

    Returns (model, TrainReport); the model is modified in place (beta set,
    trained flag raised, report attached).
    """
    points = sample_collocation(
        model.domain, config.Q, config.seed, autonomous=model.system.autonomous
    )
    asm = ResidualAssembler(model, points)
    cfg = config
    if cfg.perturb_magnitude is None:
        cfg = replace(cfg, perturb_magnitude=0.5 * model.subnet.Rm)
    beta, report = nllsq_perturb(
        asm.residual,
        asm.jacobian,
        model.subnet.beta,
        cfg,
        combined_fn=asm.residual_and_jacobian,
    )
    model.subnet.beta = beta
    model.trained = True
    model.train_report = report
    return model, report


def train_decomposed(
    decomposed: DecomposedModel,
    config,
    jobs: int = 1,
):
    """Train every local model; returns (decomposed, list of TrainReports).

    `config` is one TrainConfig shared by all cells (cell k then trains
    with seed config.seed + k, matching its subnet seed offset) or a
    sequence with one TrainConfig per cell.  With jobs > 1 the local
    trainings run in a thread pool; results are identical to sequential
    execution because the cells share no mutable state.
    """
    n = len(decomposed.models)
    if isinstance(config, TrainConfig):
        configs = [replace(config, seed=config.seed + k) for k in range(n)]
    else:
        configs = list(config)
        if len(configs) != n:
            raise ValueError(f"expected {n} configs, got {len(configs)}")

    def run(k):
        return train_model(decomposed.models[k], configs[k])

    failures = []
    reports = [None] * n
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {k: pool.submit(run, k) for k in range(n)}
            for k, fut in futures.items():
                try:
                    _, reports[k] = fut.result()
                except Exception as exc:  # aggregated below
                    failures.append((k, exc))
    else:
        for k in range(n):
            try:
                _, reports[k] = run(k)
            except Exception as exc:  # aggregated below
                failures.append((k, exc))
    if failures:
        ids = ", ".join(str(k) for k, _ in failures)
        raise NumericError(
            f"training failed in sub-domain(s) {ids}: {failures[0][1]}"
        ) from failures[0][1]
    return decomposed, reports
