"""Domain decomposition of the training box.

A Partition splits the (y0, t0) box into disjoint cells along chosen axes.
Each cell gets its own local model, trained on a slightly enlarged copy of
the cell so the pieces overlap a little during training; run-time dispatch
always uses the disjoint cells, with ties on shared faces going to the
lowest cell id.

Axis convention: state axes 0..n-1, then the t0 axis.  Ids are lexicographic
over that axis order (first axis most significant).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import OutOfDomainError
from .odecore import IvpSystem, TrainingDomain
from .psirep import PsiModel, build_model

Array = np.ndarray


def _check_boundaries(bounds, lo: float, hi: float, label: str) -> Array:
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 1 or b.size < 2:
        raise ValueError(f"{label}: need at least the two endpoints")
    if np.any(np.diff(b) <= 0):
        raise ValueError(f"{label}: boundaries must be strictly increasing")
    if not (np.isclose(b[0], lo, rtol=0, atol=1e-12 * max(1, abs(lo)))
            and np.isclose(b[-1], hi, rtol=0, atol=1e-12 * max(1, abs(hi)))):
        raise ValueError(
            f"{label}: endpoints ({b[0]}, {b[-1]}) do not match the box ({lo}, {hi})"
        )
    b[0], b[-1] = lo, hi  # snap so membership tests use the exact box
    return b


@dataclass(frozen=True)
class Partition:
    """Disjoint cells of a (y0, t0) box, defined by per-axis boundaries.

    y_boundaries has one strictly increasing array per state axis (length 2
    when the axis is not decomposed); t_boundaries is None for autonomous
    problems, an array otherwise.
    """

    y_boundaries: tuple
    t_boundaries: Optional[Array] = None

    def __post_init__(self):
        object.__setattr__(
            self, "y_boundaries",
            tuple(np.asarray(b, dtype=float) for b in self.y_boundaries),
        )
        if self.t_boundaries is not None:
            object.__setattr__(
                self, "t_boundaries", np.asarray(self.t_boundaries, dtype=float)
            )

    @property
    def dim(self) -> int:
        return len(self.y_boundaries)

    @property
    def cells_per_axis(self) -> tuple:
        c = [b.size - 1 for b in self.y_boundaries]
        if self.t_boundaries is not None:
            c.append(self.t_boundaries.size - 1)
        return tuple(c)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def y0_box(self) -> Array:
        return np.array([[b[0], b[-1]] for b in self.y_boundaries])

    @property
    def t0_interval(self) -> Optional[tuple]:
        if self.t_boundaries is None:
            return None
        return (float(self.t_boundaries[0]), float(self.t_boundaries[-1]))

    def cell_index(self, cell_id: int) -> tuple:
        """Per-axis cell indices of a lexicographic id."""
        return tuple(
            int(i) for i in np.unravel_index(cell_id, self.cells_per_axis)
        )

    def cell_box(self, cell_id: int):
        """(y_box, t_interval) of one cell."""
        idx = self.cell_index(cell_id)
        ybox = np.array(
            [[b[i], b[i + 1]] for b, i in zip(self.y_boundaries, idx)]
        )
        if self.t_boundaries is None:
            return ybox, None
        it = idx[-1]
        return ybox, (float(self.t_boundaries[it]), float(self.t_boundaries[it + 1]))

    def decomposed_axes(self) -> tuple:
        """Indices (state axes, then dim for t) that carry interior boundaries."""
        axes = [i for i, b in enumerate(self.y_boundaries) if b.size > 2]
        if self.t_boundaries is not None and self.t_boundaries.size > 2:
            axes.append(self.dim)
        return tuple(axes)


def build_partition(
    y0_box,
    t0_interval=None,
    y_boundaries: Optional[dict] = None,
    t_boundaries=None,
) -> Partition:
    """Partition a box; `y_boundaries` maps state-axis index -> boundary list.

    Axes not mentioned stay whole.  Boundary lists must be strictly
    increasing and share the box endpoints.
    """
    box = np.atleast_2d(np.asarray(y0_box, dtype=float))
    n = box.shape[0]
    y_boundaries = y_boundaries or {}
    if any(not 0 <= ax < n for ax in y_boundaries):
        raise ValueError(f"y_boundaries axis out of range for dimension {n}")
    yb = []
    for i in range(n):
        raw = y_boundaries.get(i, (box[i, 0], box[i, 1]))
        yb.append(_check_boundaries(raw, box[i, 0], box[i, 1], f"axis {i}"))
    tb = None
    if t0_interval is not None:
        lo, hi = float(t0_interval[0]), float(t0_interval[1])
        raw = t_boundaries if t_boundaries is not None else (lo, hi)
        tb = _check_boundaries(raw, lo, hi, "t0 axis")
    elif t_boundaries is not None:
        raise ValueError("t_boundaries given without a t0_interval")
    return Partition(y_boundaries=tuple(yb), t_boundaries=tb)


def locate(partition: Partition, y, t=None) -> int:
    """Cell id containing (y, t); lowest id wins on shared faces.

    Points outside the closed box raise OutOfDomainError carrying the point.
    """
    y = np.asarray(y, dtype=float)
    idx = []
    for ax, b in enumerate(partition.y_boundaries):
        v = float(y[ax])
        if v < b[0] or v > b[-1]:
            raise OutOfDomainError(
                f"state component {ax} = {v} outside [{b[0]}, {b[-1]}]",
                point=(y.copy(), t),
            )
        # side='left' puts a point sitting on an interior face into the
        # lower cell, which is the dispatch rule
        idx.append(min(max(int(np.searchsorted(b, v, side="left")) - 1, 0), b.size - 2))
    if partition.t_boundaries is not None:
        b = partition.t_boundaries
        if t is None:
            raise ValueError("partition has a t0 axis but no t was given")
        v = float(t)
        if v < b[0] or v > b[-1]:
            raise OutOfDomainError(
                f"time {v} outside [{b[0]}, {b[-1]}]", point=(y.copy(), t)
            )
        idx.append(min(max(int(np.searchsorted(b, v, side="left")) - 1, 0), b.size - 2))
    return int(np.ravel_multi_index(tuple(idx), partition.cells_per_axis))


@dataclass(frozen=True)
class Subdomain:
    """One cell plus its local training hyperparameters."""

    id: int
    box: Array
    t0_interval: Optional[tuple]
    h_max_local: float
    delta_m_local: float = 1.0
    r: tuple = ()  # enlargement fractions, one per axis (state axes, then t)
    xi_sign: str = "forward"

    def __post_init__(self):
        object.__setattr__(self, "box", np.atleast_2d(np.asarray(self.box, dtype=float)))
        n_axes = self.box.shape[0] + (0 if self.t0_interval is None else 1)
        r = tuple(self.r) if self.r else (0.0,) * n_axes
        if len(r) != n_axes:
            raise ValueError(f"r must have {n_axes} entries, got {len(r)}")
        if any(v < 0 for v in r):
            raise ValueError("enlargement fractions must be >= 0")
        object.__setattr__(self, "r", r)
        if not self.h_max_local > 0:
            raise ValueError("h_max_local must be positive")

    def training_domain(self) -> TrainingDomain:
        return TrainingDomain(
            y0_box=enlarge(self),
            t0_interval=self._enlarged_t(),
            h_max=self.h_max_local,
            xi_sign=self.xi_sign,
        )

    def _enlarged_t(self):
        if self.t0_interval is None:
            return None
        a, b = self.t0_interval
        rt = self.r[-1]
        pad = (b - a) * rt / 2.0
        return (a - pad, b + pad)


def enlarge(sub: Subdomain) -> Array:
    """Enlarged state box: [a,b] -> [a - (b-a)r/2, b + (b-a)r/2] per axis."""
    box = sub.box.copy()
    for ax in range(box.shape[0]):
        a, b = box[ax]
        pad = (b - a) * sub.r[ax] / 2.0
        box[ax] = (a - pad, b + pad)
    return box


class DecomposedModel:
    """A partition plus one local model per cell, dispatched by `locate`."""

    def __init__(self, partition: Partition, subdomains: Sequence[Subdomain],
                 models: Sequence[PsiModel]):
        if len(subdomains) != partition.n_cells or len(models) != partition.n_cells:
            raise ValueError(
                f"partition has {partition.n_cells} cells; got "
                f"{len(subdomains)} subdomains and {len(models)} models"
            )
        ids = [s.id for s in subdomains]
        if ids != list(range(partition.n_cells)):
            raise ValueError("subdomains must be ordered by dense ids 0..Ne-1")
        self.partition = partition
        self.subdomains = tuple(subdomains)
        self.models = list(models)

    @property
    def system(self) -> IvpSystem:
        return self.models[0].system

    @property
    def trained(self) -> bool:
        return all(m.trained for m in self.models)

    def model_at(self, y, t=None) -> PsiModel:
        return self.models[locate(self.partition, y, t)]

    def subdomain_at(self, y, t=None) -> Subdomain:
        return self.subdomains[locate(self.partition, y, t)]

    def __len__(self):
        return len(self.models)


def _per_cell(value, n_cells: int, label: str):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return [float(arr)] * n_cells
    if arr.size != n_cells:
        raise ValueError(f"{label}: expected a scalar or {n_cells} values, got {arr.size}")
    return [float(v) for v in arr]


def build_decomposed(
    system: IvpSystem,
    y0_box,
    h_max,
    kind: str,
    M: int,
    Rm: float,
    seed: int,
    t0_interval=None,
    y_boundaries: Optional[dict] = None,
    t_boundaries=None,
    r=0.0,
    delta_m=1.0,
    xi_sign: str = "forward",
    activation: str = "gaussian",
) -> DecomposedModel:
    """Assemble untrained local models over a partition.

    `h_max` and `delta_m` may be scalars or one value per cell (id order);
    scalar `r` applies to decomposed axes only, or pass one fraction per
    axis (state axes, then t).  Cell k's subnet uses seed + k so local
    trainings stay independent and reproducible.
    """
    if system.autonomous and t0_interval is not None:
        raise ValueError("autonomous systems take no t0_interval")
    if not system.autonomous and t0_interval is None:
        raise ValueError("non-autonomous systems require a t0_interval")

    part = build_partition(y0_box, t0_interval, y_boundaries, t_boundaries)
    n_axes = part.dim + (0 if part.t_boundaries is None else 1)
    r_arr = np.asarray(r, dtype=float)
    if r_arr.ndim == 0:
        r_vec = np.zeros(n_axes)
        for ax in part.decomposed_axes():
            r_vec[ax] = float(r_arr)
    else:
        if r_arr.size != n_axes:
            raise ValueError(f"r must be a scalar or have {n_axes} entries")
        r_vec = r_arr

    n_cells = part.n_cells
    h_locals = _per_cell(h_max, n_cells, "h_max")
    dm_locals = _per_cell(delta_m, n_cells, "delta_m")

    subs, models = [], []
    for cid in range(n_cells):
        ybox, tint = part.cell_box(cid)
        sub = Subdomain(
            id=cid,
            box=ybox,
            t0_interval=tint,
            h_max_local=h_locals[cid],
            delta_m_local=dm_locals[cid],
            r=tuple(r_vec),
            xi_sign=xi_sign,
        )
        subs.append(sub)
        models.append(
            build_model(
                system,
                sub.training_domain(),
                kind=kind,
                M=M,
                Rm=Rm,
                seed=seed + cid,
                delta_m=sub.delta_m_local,
                activation=activation,
            )
        )
    return DecomposedModel(part, subs, models)
