"""Benchmark experiments, flow-oracle checks, and run-config assembly.

Three jobs live here.  `run_experiment` sweeps one knob (network width,
collocation count, step bound, or solver tolerance) across a set of methods
on a catalog problem and emits a plot-ready CSV/JSON table.
`verify_flow_theorems` checks the shift symmetries a trained stepper is
allowed to exploit, using a high-accuracy integrator as the exact-flow
oracle.  The `*_from_run_config` helpers turn a validated run-config dict
into concrete model / training / marching objects for the CLI.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .catalog import CatalogEntry, assemble_model, build_default_model, get_entry
from .configio import load_toml, validate_run_config
from .decomp import DecomposedModel
from .errors import ConfigError
from .marcher import MarchConfig, march
from .odecore import Trajectory, error_metrics
from .psirep import canon_kind
from .refsolve import (
    Tolerances,
    dp54_adaptive,
    newton_root,
    rk4_fixed,
    sdirk2_adaptive,
)
from .trainer import TrainConfig, train_decomposed, train_model

__all__ = [
    "ExperimentConfig",
    "FlowTheoremReport",
    "ResultRow",
    "TheoremCheck",
    "canon_method",
    "load_experiment_config",
    "march_config_from_run_config",
    "model_from_run_config",
    "rows_to_csv",
    "run_experiment",
    "verify_flow_theorems",
    "write_results",
]

CLASSICAL_METHODS = ("rk4", "dp54", "sdirk2")
SWEEP_VARIABLES = ("M", "Q", "h_max", "tolerance")

# Comparison tolerances for adaptive classical rows when the sweep variable
# is not `tolerance`.
_BASELINE_RTOL = {"dp54": 1e-8, "sdirk2": 1e-6}

_CSV_COLUMNS = (
    "method",
    "sweep",
    "value",
    "e_max",
    "e_rms",
    "train_seconds",
    "march_seconds",
    "error",
)

_OVERRIDE_FIELDS = {
    "M": int,
    "Q": int,
    "Rm": float,
    "h_max": float,
    "delta_m": float,
    "t_final": float,
    "dt": float,
    "activation": str,
}


def canon_method(name: str) -> str:
    """Canonical method key: a representation kind or rk4/dp54/sdirk2."""
    low = str(name).strip().lower()
    if low in CLASSICAL_METHODS:
        return low
    try:
        return canon_kind(name)
    except ValueError:
        raise ConfigError(
            f"unknown method {name!r}; expected a representation kind or one "
            f"of {', '.join(CLASSICAL_METHODS)}"
        ) from None


def _as_int(value, label: str) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ConfigError(f"{label} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark run: sweep a single knob across several methods.

    `sweep` is one of M (network width), Q (collocation points per
    sub-domain), h_max (training step bound), or tolerance (relative
    tolerance of the adaptive classical solvers).  `values` are the sweep
    points, `methods` the per-row solvers.  `overrides` pins non-swept
    problem settings (M, Q, Rm, h_max, delta_m, t_final, dt, activation).
    """

    problem: str
    sweep: str
    values: tuple
    methods: tuple
    output: Optional[str] = None
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        get_entry(self.problem)
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigError(
                f"sweep must be one of {SWEEP_VARIABLES}, got {self.sweep!r}"
            )
        vals = []
        for v in self.values:
            if self.sweep in ("M", "Q"):
                iv = _as_int(v, f"sweep value for {self.sweep}")
                if iv < 1:
                    raise ConfigError(f"sweep value {iv} must be >= 1")
                vals.append(iv)
            else:
                fv = float(v)
                if not fv > 0:
                    raise ConfigError(f"sweep value {fv} must be positive")
                vals.append(fv)
        object.__setattr__(self, "values", tuple(vals))
        canon = []
        for m in self.methods:
            key = canon_method(m)
            if key not in canon:
                canon.append(key)
        object.__setattr__(self, "methods", tuple(canon))
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        ov = {}
        for key, raw in dict(self.overrides).items():
            if key not in _OVERRIDE_FIELDS:
                raise ConfigError(
                    f"unknown override {key!r}; known: "
                    f"{', '.join(sorted(_OVERRIDE_FIELDS))}"
                )
            want = _OVERRIDE_FIELDS[key]
            if want is int:
                ov[key] = _as_int(raw, f"override {key}")
            elif want is float:
                if isinstance(raw, bool):
                    raise ConfigError(f"override {key} must be a number")
                ov[key] = float(raw)
            else:
                ov[key] = str(raw)
        object.__setattr__(self, "overrides", ov)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {"problem", "sweep", "values", "methods", "output", "seed",
                 "overrides"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(
                f"unknown experiment keys: {', '.join(sorted(unknown))}"
            )
        for req in ("problem", "sweep", "values", "methods"):
            if req not in data:
                raise ConfigError(f"experiment config is missing {req!r}")
        return cls(
            problem=str(data["problem"]),
            sweep=str(data["sweep"]),
            values=tuple(data["values"]),
            methods=tuple(data["methods"]),
            output=None if data.get("output") is None else str(data["output"]),
            seed=data.get("seed", 0),
            overrides=dict(data.get("overrides", {})),
        )


def load_experiment_config(path) -> ExperimentConfig:
    """Read an experiment description from a TOML file.

    Keys may sit at the top level or inside a single [experiment] table;
    overrides go in [overrides] (or [experiment.overrides]).
    """
    data = load_toml(path)
    if set(data) == {"experiment"} and isinstance(data["experiment"], dict):
        data = data["experiment"]
    return ExperimentConfig.from_dict(data)


@dataclass
class ResultRow:
    """One (method, sweep value) outcome; `error` holds a failure message."""

    method: str
    sweep: str
    value: Union[int, float]
    e_max: Optional[float] = None
    e_rms: Optional[float] = None
    train_seconds: Optional[float] = None
    march_seconds: Optional[float] = None
    error: Optional[str] = None


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def rows_to_csv(rows: Sequence[ResultRow], fh) -> None:
    """Write rows as CSV: comma-separated, '.' decimal, 17 significant digits."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, col)) for col in _CSV_COLUMNS])


def write_results(config: ExperimentConfig, rows: Sequence[ResultRow],
                  base_path) -> Tuple[str, str]:
    """Write <base>.csv and <base>.json; returns the two paths."""
    base = str(base_path)
    if base.endswith(".csv") or base.endswith(".json"):
        base = base.rsplit(".", 1)[0]
    csv_path, json_path = base + ".csv", base + ".json"
    with open(csv_path, "w", newline="") as fh:
        rows_to_csv(rows, fh)
    doc = {
        "problem": config.problem,
        "sweep": config.sweep,
        "values": list(config.values),
        "methods": list(config.methods),
        "seed": config.seed,
        "overrides": dict(config.overrides),
        "rows": [asdict(row) for row in rows],
    }
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def _reference_on(entry: CatalogEntry, y0, times) -> Trajectory:
    """Reference states on the candidate's own time grid.

    Uses the closed-form solution when the catalog provides one, otherwise a
    tight-tolerance adaptive integration recorded exactly at `times` (the
    low-order implicit integrator for stiff problems, which can be slow).
    """
    times = np.asarray(times, dtype=float)
    if entry.exact is not None:
        return Trajectory(times, entry.exact(y0, float(times[0]), times))
    if entry.stiff:
        integ, tol = sdirk2_adaptive, Tolerances(atol=1e-12, rtol=1e-10)
    else:
        integ, tol = dp54_adaptive, Tolerances(atol=1e-14, rtol=1e-12)
    return integ(entry.system, y0, float(times[0]), float(times[-1]), tol,
                 grid=times)


def _march_window(entry: CatalogEntry, overrides: dict):
    t_final = float(overrides.get("t_final", entry.t_final))
    dt = overrides.get("dt", entry.dt)
    return t_final, (None if dt is None else float(dt))


def _nn_row(entry: CatalogEntry, kind: str, config: ExperimentConfig,
            value) -> ResultRow:
    row = ResultRow(method=kind, sweep=config.sweep, value=value)
    if config.sweep == "tolerance":
        row.error = "tolerance sweep does not apply to trained models"
        return row
    build_kw = {
        k: config.overrides[k]
        for k in ("M", "Q", "Rm", "h_max", "delta_m")
        if k in config.overrides
    }
    build_kw[config.sweep] = value
    activation = config.overrides.get("activation", "gaussian")
    model, q = build_default_model(
        entry, kind, seed=config.seed, activation=activation, **build_kw
    )
    train_cfg = TrainConfig(Q=q, seed=config.seed)
    tic = time.perf_counter()
    if isinstance(model, DecomposedModel):
        model, _ = train_decomposed(model, train_cfg)
    else:
        model, _ = train_model(model, train_cfg)
    row.train_seconds = time.perf_counter() - tic

    t_final, dt = _march_window(entry, config.overrides)
    march_cfg = MarchConfig(
        t_span=(entry.t0, t_final), mode=entry.march_mode, dt=dt
    )
    tic = time.perf_counter()
    traj = march(model, entry.y0, entry.t0, march_cfg)
    row.march_seconds = time.perf_counter() - tic

    report = error_metrics(traj, _reference_on(entry, traj.states[0], traj.times))
    row.e_max, row.e_rms = report.e_max, report.e_rms
    return row


def _classical_row(entry: CatalogEntry, method: str, config: ExperimentConfig,
                   value) -> ResultRow:
    row = ResultRow(method=method, sweep=config.sweep, value=value)
    t_final, dt = _march_window(entry, config.overrides)
    y0 = np.asarray(entry.y0, dtype=float)
    if method == "rk4":
        if config.sweep == "tolerance":
            row.error = "rk4 has no tolerance parameter"
            return row
        if dt is None:
            row.error = "no fixed step size defined for this problem"
            return row
        tic = time.perf_counter()
        traj = rk4_fixed(entry.system, y0, entry.t0, t_final, dt)
        row.march_seconds = time.perf_counter() - tic
    else:
        rtol = float(value) if config.sweep == "tolerance" else _BASELINE_RTOL[method]
        tol = Tolerances(atol=rtol * 1e-2, rtol=rtol)
        integ = dp54_adaptive if method == "dp54" else sdirk2_adaptive
        grid = None
        if dt is not None:
            n = max(1, int(round((t_final - entry.t0) / dt)))
            grid = np.linspace(entry.t0, t_final, n + 1)
        tic = time.perf_counter()
        traj = integ(entry.system, y0, entry.t0, t_final, tol, grid=grid)
        row.march_seconds = time.perf_counter() - tic
    report = error_metrics(traj, _reference_on(entry, traj.states[0], traj.times))
    row.e_max, row.e_rms = report.e_max, report.e_rms
    return row


def _one_row(entry: CatalogEntry, method: str, config: ExperimentConfig,
             value) -> ResultRow:
    try:
        if method in CLASSICAL_METHODS:
            return _classical_row(entry, method, config, value)
        return _nn_row(entry, method, config, value)
    except Exception as exc:  # recorded per row; the sweep keeps going
        return ResultRow(
            method=method,
            sweep=config.sweep,
            value=value,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   record_timings: bool = True) -> list:
    """Run the sweep and return rows in (value, method) order.

    Each row trains/marches or integrates independently and is compared
    against the problem's reference solution; failures are captured in the
    row's `error` field.  Up to `jobs` rows execute concurrently, but the
    returned order never depends on completion order.  With
    `record_timings=False` the wall-time columns are zeroed, which makes the
    CSV byte-stable across runs with the same seed.  When `config.output`
    is set, <output>.csv and <output>.json are written.
    """
    entry = get_entry(config.problem)
    tasks = [(method, value) for value in config.values
             for method in config.methods]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(lambda mv: _one_row(entry, mv[0], config, mv[1]), tasks)
            )
    else:
        rows = [_one_row(entry, method, config, value)
                for method, value in tasks]
    if not record_timings:
        for row in rows:
            if row.train_seconds is not None:
                row.train_seconds = 0.0
            if row.march_seconds is not None:
                row.march_seconds = 0.0
    if config.output is not None:
        write_results(config, rows, config.output)
    return rows


# ---------------------------------------------------------------------------
# Flow-oracle shift checks


@dataclass(frozen=True)
class TheoremCheck:
    name: str
    max_defect: float
    tol: float
    passed: bool
    samples: int


@dataclass(frozen=True)
class FlowTheoremReport:
    problem: str
    checks: Tuple[TheoremCheck, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


_ORACLE_TOL = Tolerances(atol=1e-15, rtol=1e-13)


def _flow(system, y0, t0: float, xi: float) -> np.ndarray:
    """Exact-flow oracle: tight-tolerance adaptive integration over xi."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if xi == 0.0:
        return y0.copy()
    traj = dp54_adaptive(system, y0, t0, t0 + xi, _ORACLE_TOL)
    return traj.states[-1]


def _draw_points(entry: CatalogEntry, samples: int, rng):
    box = np.atleast_2d(np.asarray(entry.y0_box, dtype=float))
    h = float(np.max(np.atleast_1d(entry.h_max)))
    out = []
    for _ in range(samples):
        y0 = rng.uniform(box[:, 0], box[:, 1])
        if entry.system.autonomous:
            t0 = 0.0
        else:
            t0 = float(rng.uniform(*entry.t0_interval))
        xi = float(rng.uniform(0.0, h))
        out.append((y0, t0, xi))
    return out


def _check_temporal_shift(entry, samples, tol, rng) -> TheoremCheck:
    # Shifting the start time by one forcing period leaves the flow alone.
    period = float(entry.system.temporal_period)
    worst = 0.0
    for y0, t0, xi in _draw_points(entry, samples, rng):
        shifted = _flow(entry.system, y0, t0 + period, xi)
        base = _flow(entry.system, y0, t0, xi)
        worst = max(worst, float(np.max(np.abs(shifted - base))))
    return TheoremCheck("temporal_shift", worst, tol, worst <= tol, samples)


def _check_state_shift(entry, samples, tol, rng) -> TheoremCheck:
    # Translating the start state by a lattice vector translates the flow
    # by the same vector.
    lattice = np.asarray(entry.system.periodicity_vector, dtype=float)
    axes = np.flatnonzero(lattice)
    worst = 0.0
    for y0, t0, xi in _draw_points(entry, samples, rng):
        axis = int(axes[rng.integers(len(axes))])
        shift = np.zeros_like(lattice)
        shift[axis] = lattice[axis]
        moved = _flow(entry.system, y0 + shift, t0, xi)
        base = _flow(entry.system, y0, t0, xi)
        worst = max(worst, float(np.max(np.abs(moved - base - shift))))
    return TheoremCheck("state_shift", worst, tol, worst <= tol, samples)


def _periodic_point(entry: CatalogEntry, period: float) -> np.ndarray:
    """State whose trajectory closes after one forcing period.

    Fixed point of the period-return map: a few plain map iterations pull
    the start onto the attractor, then Newton (finite-difference Jacobian)
    polishes it.
    """
    system = entry.system
    t0 = float(entry.t0)
    z = np.atleast_1d(np.asarray(entry.y0, dtype=float))
    for _ in range(25):
        z_next = _flow(system, z, t0, period)
        drift = float(np.max(np.abs(z_next - z)))
        z = z_next
        if drift < 1e-2:
            break

    def gap(state):
        return _flow(system, state, t0, period) - state

    def gap_jac(state):
        n = state.size
        jac = np.empty((n, n))
        for j in range(n):
            eps = 1e-6 * max(1.0, abs(state[j]))
            plus, minus = state.copy(), state.copy()
            plus[j] += eps
            minus[j] -= eps
            jac[:, j] = (
                _flow(system, plus, t0, period)
                - _flow(system, minus, t0, period)
            ) / (2.0 * eps)
        return jac - np.eye(n)

    return newton_root(gap, gap_jac, z, tol=1e-11, max_iter=40)


def _check_periodic_orbit(entry, samples, tol, rng) -> TheoremCheck:
    # A start state fixed by the period-return map closes its orbit: its
    # trajectory repeats with the forcing period at every offset.
    period = float(entry.system.temporal_period)
    t0 = float(entry.t0)
    h = float(np.max(np.atleast_1d(entry.h_max)))
    y_star = _periodic_point(entry, period)
    worst = float(np.max(np.abs(_flow(entry.system, y_star, t0, period) - y_star)))
    n_offsets = min(samples, 5)
    for _ in range(n_offsets):
        xi = float(rng.uniform(0.0, h))
        later = _flow(entry.system, y_star, t0, xi + period)
        base = _flow(entry.system, y_star, t0, xi)
        worst = max(worst, float(np.max(np.abs(later - base))))
    return TheoremCheck("periodic_orbit", worst, tol, worst <= tol, n_offsets)


_THEOREM_CHECKS = {
    "temporal_shift": _check_temporal_shift,
    "state_shift": _check_state_shift,
    "periodic_orbit": _check_periodic_orbit,
}


def verify_flow_theorems(problem, samples: int = 20, tol: float = 1e-8,
                         seed: int = 0, theorems: Optional[Sequence[str]] = None
                         ) -> FlowTheoremReport:
    """Check the flow symmetries implied by a problem's periodicity metadata.

    Runs `temporal_shift` and `periodic_orbit` when the system declares a
    forcing period, and `state_shift` when it declares a state lattice
    vector, each at `samples` random (y0, t0, xi) draws against the
    exact-flow oracle.  Pass `theorems` to select a subset; requesting a
    check whose metadata is absent raises ConfigError.
    """
    entry = problem if isinstance(problem, CatalogEntry) else get_entry(problem)
    system = entry.system
    available = []
    if system.temporal_period is not None:
        available += ["temporal_shift", "periodic_orbit"]
    if system.periodicity_vector is not None and np.any(
        np.asarray(system.periodicity_vector, dtype=float) != 0.0
    ):
        available.append("state_shift")
    if theorems is None:
        selected = available
        if not selected:
            raise ConfigError(
                f"{entry.problem_id}: no periodicity metadata to verify"
            )
    else:
        selected = []
        for name in theorems:
            if name not in _THEOREM_CHECKS:
                raise ConfigError(
                    f"unknown theorem check {name!r}; known: "
                    f"{', '.join(sorted(_THEOREM_CHECKS))}"
                )
            if name not in available:
                raise ConfigError(
                    f"{entry.problem_id}: periodicity metadata for "
                    f"{name!r} is absent"
                )
            if name not in selected:
                selected.append(name)
    rng = np.random.default_rng(seed)
    checks = tuple(
        _THEOREM_CHECKS[name](entry, samples, tol, rng) for name in selected
    )
    return FlowTheoremReport(entry.problem_id, checks)


# ---------------------------------------------------------------------------
# Run-config assembly


def model_from_run_config(cfg: dict):
    """Build (untrained model, TrainConfig, CatalogEntry) from a run config.

    Catalog defaults for the chosen problem/kind fill everything the config
    leaves out; [domain], [subdomains], [network], and [train] sections
    override field by field.
    """
    cfg = validate_run_config(cfg)
    entry = get_entry(cfg["problem"])
    kind_cfg = entry.kind_config(cfg.get("kind"))
    dom = cfg.get("domain", {})
    sub = cfg.get("subdomains", {})
    net = cfg.get("network", {})
    spec = {
        "kind": kind_cfg["kind"],
        "M": net.get("M", kind_cfg["M"]),
        "Rm": net.get("Rm", kind_cfg["Rm"]),
        "delta_m": dom.get("delta_m", kind_cfg["delta_m"]),
        "h_max": dom.get("h_max", kind_cfg["h_max"]),
        "y0_box": dom.get("y0_box", entry.y0_box),
        "t0_interval": dom.get("t0_interval", entry.t0_interval),
        "y_boundaries": sub.get("y_boundaries", kind_cfg["y_boundaries"]),
        "t_boundaries": sub.get("t_boundaries", kind_cfg["t_boundaries"]),
        "r": sub.get("r", kind_cfg["r"]),
        "band_axis": sub.get("band_axis", entry.band_axis),
    }
    seed = int(cfg.get("seed", 0))
    activation = str(cfg.get("activation", "gaussian"))
    model = assemble_model(entry.system, spec, seed=seed, activation=activation)
    train_section = dict(cfg.get("train", {}))
    q = train_section.pop("Q", kind_cfg["Q"])
    train_cfg = TrainConfig(Q=int(q), seed=seed, **train_section)
    return model, train_cfg, entry


def march_config_from_run_config(cfg: dict, entry: Optional[CatalogEntry] = None):
    """Resolve (y0, MarchConfig) from a run config's [march] section."""
    cfg = validate_run_config(cfg)
    if entry is None:
        entry = get_entry(cfg["problem"])
    section = cfg.get("march", {})
    t_span = tuple(section.get("t_span", (entry.t0, entry.t_final)))
    mode = section.get("mode", entry.march_mode)
    dt = section.get("dt", entry.dt if mode == "fixed" else None)
    y0 = np.asarray(section.get("y0", entry.y0), dtype=float)
    march_cfg = MarchConfig(
        t_span=t_span,
        mode=mode,
        dt=None if dt is None else float(dt),
        safety=float(section.get("safety", 0.95)),
        periodicity_exploit=section.get("periodicity_exploit"),
        allow_extrapolation=bool(section.get("allow_extrapolation", False)),
    )
    return y0, march_cfg
