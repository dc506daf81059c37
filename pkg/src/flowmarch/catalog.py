"""Benchmark problems: systems, exact solutions, and default run setups.

Each problem id maps to a :class:`CatalogEntry` bundling the system, the
default initial condition and marching span, the training box, the
domain-decomposition layout, and per-representation defaults (M, Q, Rm,
delta_m, h_max) known to work on that problem.  `get_system` re-materializes
a bare system from its key and parameters, which is how saved model files
recover their right-hand sides without pickling callables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np

from .decomp import Partition, build_decomposed, build_partition
from .errors import ConfigError
from .odecore import IvpSystem, TrainingDomain
from .psirep import build_model, canon_kind

Array = np.ndarray

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# systems


def linear(lam: float = 100.0) -> IvpSystem:
    """dy/dt = -lam*(y - cos(pi*t)); scalar, non-autonomous, stiff for large lam.

    The forcing has period 2 in t, and the problem admits a closed-form
    solution (:func:`exact_linear_solution`).
    """
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError("lam must be positive")

    def rhs(y, t):
        t = np.asarray(t, dtype=float)
        return -lam * (y - np.cos(np.pi * t)[..., None])

    def jac_y(y, t):
        return np.full(y.shape[:-1] + (1, 1), -lam)

    def jac_t(y, t):
        t = np.asarray(t, dtype=float)
        g = -lam * np.pi * np.sin(np.pi * t)
        return np.broadcast_to(np.asarray(g)[..., None], y.shape).copy()

    return IvpSystem(
        dim=1,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=False,
        temporal_period=2.0,
        name=f"linear(lam={lam:g})",
        catalog_key="linear",
        catalog_params={"lam": lam},
    )


def pendulum_free(alpha: float = 0.1, beta: float = 9.8) -> IvpSystem:
    """Damped pendulum: dy1/dt = y2, dy2/dt = -alpha*y2 - beta*sin(y1).

    Autonomous; the right-hand side is 2*pi-periodic in the angle y1.
    """
    alpha, beta = float(alpha), float(beta)

    def rhs(y, t):
        y1, y2 = y[..., 0], y[..., 1]
        return np.stack([y2, -alpha * y2 - beta * np.sin(y1)], axis=-1)

    def jac_y(y, t):
        J = np.zeros(y.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -beta * np.cos(y[..., 0])
        J[..., 1, 1] = -alpha
        return J

    def jac_t(y, t):
        return np.zeros_like(y)

    return IvpSystem(
        dim=2,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=True,
        periodicity_vector=(_TWO_PI, 0.0),
        name=f"pendulum_free(alpha={alpha:g}, beta={beta:g})",
        catalog_key="pendulum_free",
        catalog_params={"alpha": alpha, "beta": beta},
    )


def pendulum_forced(
    alpha: float = 0.1, beta: float = 9.8, gamma: float = 0.2
) -> IvpSystem:
    """Pendulum with a cosine drive: dy2/dt gains the term gamma*cos(pi*t).

    Non-autonomous with temporal period 2; still 2*pi-periodic in y1.
    """
    alpha, beta, gamma = float(alpha), float(beta), float(gamma)

    def rhs(y, t):
        t = np.asarray(t, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        f2 = -alpha * y2 - beta * np.sin(y1) + gamma * np.cos(np.pi * t)
        return np.stack([np.broadcast_to(y2, f2.shape), f2], axis=-1)

    def jac_y(y, t):
        J = np.zeros(y.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -beta * np.cos(y[..., 0])
        J[..., 1, 1] = -alpha
        return J

    def jac_t(y, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(y)
        out[..., 1] = -gamma * np.pi * np.sin(np.pi * t)
        return out

    return IvpSystem(
        dim=2,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=False,
        temporal_period=2.0,
        periodicity_vector=(_TWO_PI, 0.0),
        name=f"pendulum_forced(alpha={alpha:g}, beta={beta:g}, gamma={gamma:g})",
        catalog_key="pendulum_forced",
        catalog_params={"alpha": alpha, "beta": beta, "gamma": gamma},
    )


def van_der_pol(mu: float = 5.0) -> IvpSystem:
    """Van der Pol oscillator: dy1/dt = y2, dy2/dt = mu*(1-y1^2)*y2 - y1."""
    mu = float(mu)

    def rhs(y, t):
        y1, y2 = y[..., 0], y[..., 1]
        return np.stack([y2, mu * (1.0 - y1 * y1) * y2 - y1], axis=-1)

    def jac_y(y, t):
        y1, y2 = y[..., 0], y[..., 1]
        J = np.zeros(y.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -2.0 * mu * y1 * y2 - 1.0
        J[..., 1, 1] = mu * (1.0 - y1 * y1)
        return J

    def jac_t(y, t):
        return np.zeros_like(y)

    return IvpSystem(
        dim=2,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=True,
        name=f"van_der_pol(mu={mu:g})",
        catalog_key="van_der_pol",
        catalog_params={"mu": mu},
    )


def lorenz63(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> IvpSystem:
    """The Lorenz convection model (chaotic at the classic parameters)."""
    sigma, rho, beta = float(sigma), float(rho), float(beta)

    def rhs(y, t):
        y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
        return np.stack(
            [sigma * (y2 - y1), y1 * (rho - y3) - y2, y1 * y2 - beta * y3], axis=-1
        )

    def jac_y(y, t):
        y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
        J = np.zeros(y.shape[:-1] + (3, 3))
        J[..., 0, 0] = -sigma
        J[..., 0, 1] = sigma
        J[..., 1, 0] = rho - y3
        J[..., 1, 1] = -1.0
        J[..., 1, 2] = -y1
        J[..., 2, 0] = y2
        J[..., 2, 1] = y1
        J[..., 2, 2] = -beta
        return J

    def jac_t(y, t):
        return np.zeros_like(y)

    return IvpSystem(
        dim=3,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=True,
        name=f"lorenz63(sigma={sigma:g}, rho={rho:g}, beta={beta:g})",
        catalog_key="lorenz63",
        catalog_params={"sigma": sigma, "rho": rho, "beta": beta},
    )


def hindmarsh_rose(current: float = 3.1, alpha: float = 0.006) -> IvpSystem:
    """Neuronal spiking-bursting model.

    dy1/dt = y2 - y1^3 + 3*y1^2 - y3 + current
    dy2/dt = 1 - 5*y1^2 - y2
    dy3/dt = 4*alpha*(y1 + 8/5) - alpha*y3
    """
    current, alpha = float(current), float(alpha)

    def rhs(y, t):
        y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
        f1 = y2 - y1**3 + 3.0 * y1 * y1 - y3 + current
        f2 = 1.0 - 5.0 * y1 * y1 - y2
        f3 = 4.0 * alpha * (y1 + 1.6) - alpha * y3
        return np.stack([f1, f2, f3], axis=-1)

    def jac_y(y, t):
        y1 = y[..., 0]
        J = np.zeros(y.shape[:-1] + (3, 3))
        J[..., 0, 0] = -3.0 * y1 * y1 + 6.0 * y1
        J[..., 0, 1] = 1.0
        J[..., 0, 2] = -1.0
        J[..., 1, 0] = -10.0 * y1
        J[..., 1, 1] = -1.0
        J[..., 2, 0] = 4.0 * alpha
        J[..., 2, 2] = -alpha
        return J

    def jac_t(y, t):
        return np.zeros_like(y)

    return IvpSystem(
        dim=3,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=True,
        name=f"hindmarsh_rose(current={current:g}, alpha={alpha:g})",
        catalog_key="hindmarsh_rose",
        catalog_params={"current": current, "alpha": alpha},
    )


def lorenz96(forcing: float = 8.0, n: int = 5) -> IvpSystem:
    """Cyclic Lorenz-96 model: dy_i/dt = (y_{i+1} - y_{i-2})*y_{i-1} - y_i + F."""
    forcing = float(forcing)
    n = int(n)
    if n < 4:
        raise ValueError("lorenz96 needs at least 4 components")

    def rhs(y, t):
        yp1 = np.roll(y, -1, axis=-1)
        ym1 = np.roll(y, 1, axis=-1)
        ym2 = np.roll(y, 2, axis=-1)
        return (yp1 - ym2) * ym1 - y + forcing

    def jac_y(y, t):
        # For n >= 4 the four stencil columns i+1, i-2, i-1, i are distinct.
        yp1 = np.roll(y, -1, axis=-1)
        ym1 = np.roll(y, 1, axis=-1)
        ym2 = np.roll(y, 2, axis=-1)
        J = np.zeros(y.shape[:-1] + (n, n))
        i = np.arange(n)
        J[..., i, (i + 1) % n] = ym1
        J[..., i, (i - 2) % n] = -ym1
        J[..., i, (i - 1) % n] = yp1 - ym2
        J[..., i, i] = -1.0
        return J

    def jac_t(y, t):
        return np.zeros_like(y)

    return IvpSystem(
        dim=n,
        rhs=rhs,
        jac_y=jac_y,
        jac_t=jac_t,
        autonomous=True,
        name=f"lorenz96(forcing={forcing:g}, n={n})",
        catalog_key="lorenz96",
        catalog_params={"forcing": forcing, "n": n},
    )


_SYSTEM_FACTORIES: Dict[str, Callable[..., IvpSystem]] = {
    "linear": linear,
    "pendulum_free": pendulum_free,
    "pendulum_forced": pendulum_forced,
    "van_der_pol": van_der_pol,
    "lorenz63": lorenz63,
    "hindmarsh_rose": hindmarsh_rose,
    "lorenz96": lorenz96,
}


def get_system(key: str, **params) -> IvpSystem:
    """Instantiate a catalog system from its key and parameter dict."""
    try:
        factory = _SYSTEM_FACTORIES[key]
    except KeyError:
        known = ", ".join(sorted(_SYSTEM_FACTORIES))
        raise ValueError(f"unknown system key {key!r}; known keys: {known}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# exact solutions


def exact_linear_solution(lam: float, y0: float, t0: float, t):
    """Closed-form solution of dy/dt = -lam*(y - cos(pi*t)).

    y(t) = [y0 - A cos(pi t0) - B sin(pi t0)] e^{-lam (t - t0)}
           + A cos(pi t) + B sin(pi t),
    with A = lam^2/(lam^2 + pi^2) and B = lam*pi/(lam^2 + pi^2).
    Vectorized over t; returns a float for scalar t.
    """
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    y0, t0 = float(y0), float(t0)
    t_arr = np.asarray(t, dtype=float)
    denom = lam * lam + math.pi**2
    A = lam * lam / denom
    B = lam * math.pi / denom
    transient = y0 - A * math.cos(math.pi * t0) - B * math.sin(math.pi * t0)
    y = transient * np.exp(-lam * (t_arr - t0)) + A * np.cos(np.pi * t_arr) + B * np.sin(np.pi * t_arr)
    if np.ndim(t) == 0:
        return float(y)
    return y


def _linear_exact_map(lam: float):
    def exact(y0, t0, times):
        y0 = float(np.asarray(y0, dtype=float).reshape(-1)[0])
        vals = exact_linear_solution(lam, y0, float(t0), np.asarray(times, dtype=float))
        return np.asarray(vals, dtype=float).reshape(-1, 1)

    return exact


# ---------------------------------------------------------------------------
# default run setups


@dataclass(frozen=True)
class KindDefaults:
    """Per-representation overrides for one problem.

    h_max may be a scalar or one value per band along the entry's band_axis;
    fields left None fall back to the entry-level defaults.
    """

    M: int
    Q: int
    Rm: float
    delta_m: Optional[float] = None
    h_max: Union[float, tuple, None] = None
    r: Union[float, tuple, None] = None
    y_boundaries: Optional[dict] = None


@dataclass(frozen=True)
class CatalogEntry:
    """One benchmark problem with its defaults.

    `y_boundaries` / `t_boundaries` describe the training-domain partition
    (None for single-domain problems); `r` is the sub-domain enlargement
    fraction; `exact(y0, t0, times) -> (m, n)` is present only when a
    closed-form solution exists, otherwise callers fall back to a reference
    integrator (`stiff` says which family is trustworthy).
    """

    problem_id: str
    system: IvpSystem
    y0: Array
    t0: float
    t_final: float
    dt: Optional[float]
    y0_box: Array
    t0_interval: Optional[tuple]
    h_max: float
    delta_m: float = 1.0
    y_boundaries: Optional[dict] = None
    t_boundaries: Optional[tuple] = None
    r: Union[float, tuple] = 0.0
    band_axis: Optional[int] = None
    march_mode: str = "fixed"
    stiff: bool = False
    exact: Optional[Callable] = None
    default_kind: str = "exp_s1"
    kind_defaults: Dict[str, KindDefaults] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float))
        box = np.atleast_2d(np.asarray(self.y0_box, dtype=float))
        object.__setattr__(self, "y0_box", box)
        if self.y0.shape != (self.system.dim,):
            raise ValueError(f"{self.problem_id}: y0 must have length {self.system.dim}")
        if box.shape != (self.system.dim, 2):
            raise ValueError(f"{self.problem_id}: y0_box must be (dim, 2)")
        if (self.t0_interval is None) != self.system.autonomous:
            raise ValueError(
                f"{self.problem_id}: t0_interval must be given exactly for "
                "non-autonomous systems"
            )
        if self.march_mode not in ("fixed", "quasi_adaptive"):
            raise ValueError(f"{self.problem_id}: bad march_mode {self.march_mode!r}")
        if self.march_mode == "fixed" and self.dt is None:
            raise ValueError(f"{self.problem_id}: fixed marching needs dt")

    def training_domain(self, h_max: Optional[float] = None) -> TrainingDomain:
        return TrainingDomain(
            y0_box=self.y0_box,
            t0_interval=self.t0_interval,
            h_max=float(h_max if h_max is not None else self.h_max),
        )

    def partition(self, y_boundaries: Optional[dict] = None) -> Partition:
        return build_partition(
            self.y0_box,
            self.t0_interval,
            y_boundaries if y_boundaries is not None else self.y_boundaries,
            self.t_boundaries,
        )

    def kind_config(self, kind: Optional[str] = None) -> dict:
        """Resolve a representation kind to its full default configuration."""
        kind = canon_kind(kind if kind is not None else self.default_kind)
        kd = self.kind_defaults.get(kind)
        if kd is None:
            kd = self.kind_defaults[canon_kind(self.default_kind)]
        return {
            "kind": kind,
            "M": kd.M,
            "Q": kd.Q,
            "Rm": kd.Rm,
            "delta_m": kd.delta_m if kd.delta_m is not None else self.delta_m,
            "h_max": kd.h_max if kd.h_max is not None else self.h_max,
            "r": kd.r if kd.r is not None else self.r,
            "y_boundaries": (
                kd.y_boundaries if kd.y_boundaries is not None else self.y_boundaries
            ),
            "t_boundaries": self.t_boundaries,
        }


def per_cell_values(partition: Partition, axis: int, values) -> Array:
    """Expand per-band values along one axis to one value per cell (id order)."""
    vals = np.asarray(values, dtype=float).reshape(-1)
    shape = partition.cells_per_axis
    if not 0 <= axis < len(shape):
        raise ConfigError(f"band axis {axis} out of range for {len(shape)} axes")
    if vals.size != shape[axis]:
        raise ConfigError(
            f"need {shape[axis]} band values along axis {axis}, got {vals.size}"
        )
    out = np.empty(partition.n_cells)
    for cid in range(partition.n_cells):
        out[cid] = vals[partition.cell_index(cid)[axis]]
    return out


def _uniform(lo: float, hi: float, cells: int) -> tuple:
    return tuple(float(v) for v in np.linspace(lo, hi, cells + 1))


def _entry_linear100() -> CatalogEntry:
    lam = 100.0
    kd = {
        "exp_s0": KindDefaults(M=800, Q=2500, Rm=0.06),
        "exp_s1": KindDefaults(M=800, Q=2500, Rm=0.5),
        "exp_s2": KindDefaults(M=800, Q=3500, Rm=0.6),
        "imp_s1": KindDefaults(M=800, Q=2500, Rm=0.5),
        "imp_s2": KindDefaults(M=800, Q=3500, Rm=0.5),
    }
    return CatalogEntry(
        problem_id="linear100",
        system=linear(lam),
        y0=(0.0,),
        t0=0.0,
        t_final=1.0,
        dt=0.02,
        y0_box=[[-1.1, 1.1]],
        t0_interval=(-0.05, 1.05),
        h_max=0.03,
        exact=_linear_exact_map(lam),
        default_kind="exp_s1",
        kind_defaults=kd,
    )


def _entry_linear1e6() -> CatalogEntry:
    lam = 1.0e6
    kd = {
        "exp_s0": KindDefaults(M=1000, Q=1000, Rm=0.4),
        "imp_s1": KindDefaults(M=1000, Q=900, Rm=0.35, delta_m=0.01, h_max=0.024),
    }
    return CatalogEntry(
        problem_id="linear1e6",
        system=linear(lam),
        y0=(0.0,),
        t0=0.0,
        t_final=1.0,
        dt=0.02,
        y0_box=[[-1.1, 1.1]],
        t0_interval=(-0.05, 1.05),
        h_max=0.025,
        delta_m=0.02,
        t_boundaries=(-0.05, 0.5, 1.05),
        r=0.05,
        stiff=True,
        exact=_linear_exact_map(lam),
        default_kind="exp_s0",
        kind_defaults=kd,
    )


def _entry_pendulum_free() -> CatalogEntry:
    kd = {
        "exp_s0": KindDefaults(M=800, Q=1000, Rm=0.6),
        "exp_s1": KindDefaults(M=800, Q=1000, Rm=0.6),
        "exp_s2": KindDefaults(M=800, Q=900, Rm=0.65),
        "imp_s1": KindDefaults(M=800, Q=1500, Rm=0.85),
        "imp_s2": KindDefaults(M=800, Q=1000, Rm=0.85),
    }
    return CatalogEntry(
        problem_id="pendulum_free",
        system=pendulum_free(alpha=0.1, beta=9.8),
        y0=(1.0, -1.0),
        t0=0.0,
        t_final=200.0,
        dt=0.2,
        y0_box=[[-2.0, 2.0], [-4.0, 4.0]],
        t0_interval=None,
        h_max=0.25,
        y_boundaries={0: _uniform(-2.0, 2.0, 3)},
        r=0.1,
        default_kind="exp_s1",
        kind_defaults=kd,
    )


def _entry_pendulum_spin() -> CatalogEntry:
    # Large initial angular velocity; the angle winds through several turns,
    # so marching leans on the 2*pi state period instead of a wider box.
    kd = {"exp_s1": KindDefaults(M=800, Q=1500, Rm=0.6)}
    return CatalogEntry(
        problem_id="pendulum_spin",
        system=pendulum_free(alpha=0.02, beta=9.8),
        y0=(0.0, 6.5),
        t0=0.0,
        t_final=100.0,
        dt=0.1,
        y0_box=[[-3.2, 3.2], [-6.7, 6.7]],
        t0_interval=None,
        h_max=0.15,
        y_boundaries={0: _uniform(-3.2, 3.2, 3)},
        r=0.1,
        default_kind="exp_s1",
        kind_defaults=kd,
    )


def _entry_pendulum_forced() -> CatalogEntry:
    kd = {
        "exp_s0": KindDefaults(M=1200, Q=2000, Rm=0.3, delta_m=7.0),
        "exp_s1": KindDefaults(M=1200, Q=2000, Rm=0.4, delta_m=5.0),
        "exp_s2": KindDefaults(M=1200, Q=1500, Rm=0.4, delta_m=5.0),
    }
    return CatalogEntry(
        problem_id="pendulum_forced",
        system=pendulum_forced(alpha=0.1, beta=9.8, gamma=0.2),
        y0=(1.0, -1.0),
        t0=0.0,
        t_final=200.0,
        dt=0.1,
        y0_box=[[-2.0, 2.0], [-4.0, 4.0]],
        t0_interval=(0.0, 2.01),
        h_max=0.11,
        delta_m=5.0,
        y_boundaries={0: _uniform(-2.0, 2.0, 3)},
        r=0.1,
        default_kind="exp_s1",
        kind_defaults=kd,
    )


def _entry_vdp5() -> CatalogEntry:
    kd = {
        "exp_s0": KindDefaults(M=1100, Q=1500, Rm=0.45),
        "exp_s1": KindDefaults(M=1100, Q=1500, Rm=0.5),
        "exp_s2": KindDefaults(M=1100, Q=1500, Rm=0.55),
    }
    return CatalogEntry(
        problem_id="vdp5",
        system=van_der_pol(mu=5.0),
        y0=(2.0, 0.0),
        t0=0.0,
        t_final=120.0,
        dt=0.03,
        y0_box=[[-2.05, 2.05], [-8.0, 8.0]],
        t0_interval=None,
        h_max=0.035,
        y_boundaries={0: _uniform(-2.05, 2.05, 3)},
        r=0.1,
        default_kind="exp_s1",
        kind_defaults=kd,
    )


def _entry_vdp100() -> CatalogEntry:
    # Relaxation oscillation: |y2| spikes to O(100) through a thin band near
    # y2 = 0, so h_max is banded along y02 and marching is quasi-adaptive.
    y2_bands = (-140.0, -0.5, -0.03, 0.03, 0.5, 140.0)
    kd = {
        "exp_s0": KindDefaults(
            M=800, Q=1400, Rm=0.75, h_max=(0.002, 0.011, 0.018, 0.011, 0.002)
        ),
        "exp_s1": KindDefaults(
            M=800,
            Q=1000,
            Rm=0.5,
            h_max=(0.002, 0.011, 0.025, 0.011, 0.002),
            r=0.0,
            y_boundaries={0: _uniform(-2.05, 2.05, 5), 1: y2_bands},
        ),
    }
    return CatalogEntry(
        problem_id="vdp100",
        system=van_der_pol(mu=100.0),
        y0=(2.0, 0.0),
        t0=0.0,
        t_final=300.0,
        dt=None,
        y0_box=[[-2.05, 2.05], [-140.0, 140.0]],
        t0_interval=None,
        h_max=0.018,
        y_boundaries={0: _uniform(-2.05, 2.05, 3), 1: y2_bands},
        r=(0.1, 0.05),
        band_axis=1,
        march_mode="quasi_adaptive",
        stiff=True,
        default_kind="exp_s0",
        kind_defaults=kd,
    )


def _entry_lorenz63() -> CatalogEntry:
    kd = {
        "exp_s0": KindDefaults(M=900, Q=1200, Rm=0.12),
        "exp_s1": KindDefaults(M=900, Q=1000, Rm=0.1),
    }
    return CatalogEntry(
        problem_id="lorenz63",
        system=lorenz63(),
        y0=(-10.0, -10.0, 25.0),
        t0=0.0,
        t_final=17.0,
        dt=0.01,
        y0_box=[[-20.0, 20.0], [-25.0, 25.0], [2.0, 46.0]],
        t0_interval=None,
        h_max=0.012,
        delta_m=0.2,
        default_kind="exp_s0",
        kind_defaults=kd,
    )


def _entry_hindmarsh_rose() -> CatalogEntry:
    kd = {
        "exp_s0": KindDefaults(M=1200, Q=2000, Rm=0.12),
        "exp_s1": KindDefaults(M=1200, Q=2000, Rm=0.39),
    }
    return CatalogEntry(
        problem_id="hindmarsh_rose",
        system=hindmarsh_rose(current=3.1, alpha=0.006),
        y0=(-1.0, -3.5, 3.0),
        t0=0.0,
        t_final=499.8,
        dt=0.06,
        y0_box=[[-1.5, 1.8], [-8.0, 0.7], [2.7, 3.3]],
        t0_interval=None,
        h_max=0.065,
        y_boundaries={0: (-1.5, -0.8, 0.0, 0.9, 1.8)},
        default_kind="exp_s1",
        kind_defaults=kd,
    )


def _entry_lorenz96() -> CatalogEntry:
    kd = {"exp_s1": KindDefaults(M=800, Q=1500, Rm=0.15)}
    return CatalogEntry(
        problem_id="lorenz96",
        system=lorenz96(forcing=8.0, n=5),
        y0=(-0.99, -1.0, -1.0, -1.0, -1.0),
        t0=0.0,
        t_final=50.0,
        dt=0.01,
        y0_box=[[-5.0, 10.0]] * 5,
        t0_interval=None,
        h_max=0.011,
        y_boundaries={0: _uniform(-5.0, 10.0, 2)},
        default_kind="exp_s1",
        kind_defaults=kd,
    )


_ENTRY_FACTORIES: Dict[str, Callable[[], CatalogEntry]] = {
    "linear100": _entry_linear100,
    "linear1e6": _entry_linear1e6,
    "pendulum_free": _entry_pendulum_free,
    "pendulum_spin": _entry_pendulum_spin,
    "pendulum_forced": _entry_pendulum_forced,
    "vdp5": _entry_vdp5,
    "vdp100": _entry_vdp100,
    "lorenz63": _entry_lorenz63,
    "hindmarsh_rose": _entry_hindmarsh_rose,
    "lorenz96": _entry_lorenz96,
}

PROBLEM_IDS = tuple(_ENTRY_FACTORIES)


def get_entry(problem_id: str) -> CatalogEntry:
    """Look up a benchmark problem by id."""
    try:
        factory = _ENTRY_FACTORIES[problem_id]
    except KeyError:
        known = ", ".join(PROBLEM_IDS)
        raise ConfigError(
            f"unknown problem {problem_id!r}; known problems: {known}"
        ) from None
    return factory()


def assemble_model(system: IvpSystem, spec: dict, seed: int = 0,
                   activation: str = "gaussian"):
    """Build an untrained model from a fully resolved structural spec.

    spec keys: kind, M, Rm, delta_m, h_max (scalar or per-band sequence),
    y0_box, t0_interval, y_boundaries, t_boundaries, r, band_axis.  Returns a
    plain PsiModel when no boundaries are given, a DecomposedModel otherwise.
    """
    y0_box = np.atleast_2d(np.asarray(spec["y0_box"], dtype=float))
    t0_int = spec.get("t0_interval")
    y_bnd = spec.get("y_boundaries") or None
    t_bnd = spec.get("t_boundaries")
    h_max = spec["h_max"]
    banded = isinstance(h_max, (tuple, list, np.ndarray))

    if y_bnd is None and t_bnd is None:
        if banded:
            raise ConfigError("per-band h_max needs a domain partition")
        domain = TrainingDomain(
            y0_box=y0_box, t0_interval=t0_int, h_max=float(h_max)
        )
        return build_model(
            system,
            domain,
            spec["kind"],
            M=int(spec["M"]),
            Rm=float(spec["Rm"]),
            seed=seed,
            delta_m=float(spec["delta_m"]),
            activation=activation,
        )

    if banded:
        band_axis = spec.get("band_axis")
        if band_axis is None:
            raise ConfigError("per-band h_max needs a band_axis")
        part = build_partition(y0_box, t0_int, y_bnd, t_bnd)
        h_max = per_cell_values(part, int(band_axis), h_max)
    else:
        h_max = float(h_max)
    return build_decomposed(
        system,
        y0_box,
        h_max,
        spec["kind"],
        M=int(spec["M"]),
        Rm=float(spec["Rm"]),
        seed=seed,
        t0_interval=t0_int,
        y_boundaries=y_bnd,
        t_boundaries=t_bnd,
        r=spec.get("r", 0.0),
        delta_m=float(spec["delta_m"]),
        activation=activation,
    )


def build_default_model(
    problem,
    kind: Optional[str] = None,
    *,
    M: Optional[int] = None,
    Q: Optional[int] = None,
    Rm: Optional[float] = None,
    h_max=None,
    delta_m: Optional[float] = None,
    seed: int = 0,
    activation: str = "gaussian",
):
    """Assemble an untrained model for a catalog problem.

    Returns (model, Q) where Q is the resolved per-(sub)domain collocation
    count; keyword overrides replace the per-kind defaults one by one.
    """
    entry = problem if isinstance(problem, CatalogEntry) else get_entry(problem)
    cfg = entry.kind_config(kind)
    spec = {
        "kind": cfg["kind"],
        "M": cfg["M"] if M is None else M,
        "Rm": cfg["Rm"] if Rm is None else Rm,
        "delta_m": cfg["delta_m"] if delta_m is None else delta_m,
        "h_max": cfg["h_max"] if h_max is None else h_max,
        "y0_box": entry.y0_box,
        "t0_interval": entry.t0_interval,
        "y_boundaries": cfg["y_boundaries"],
        "t_boundaries": cfg["t_boundaries"],
        "r": cfg["r"],
        "band_axis": entry.band_axis,
    }
    q = int(Q if Q is not None else cfg["Q"])
    return assemble_model(entry.system, spec, seed=seed, activation=activation), q
