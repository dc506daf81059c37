"""Flow-map representations and their training residuals.

A model approximates the map psi(y0, t0, xi) = y(t0 + xi) of an IVP by

    psi = F(y0, t0, xi) + xi^(s+1) * varphi(y0, t0, xi),

where F is a prescribed baseline of local order s and varphi is the trainable
randomized subnet.  Since every baseline satisfies F(y0, t0, 0) = y0 and the
correction carries a factor xi^(s+1), the initial condition psi(y0, t0, 0) = y0
holds structurally for any output weights.

Five baselines are provided:

  exp_s0 (s=0):  F = y0
  exp_s1 (s=1):  F = y0 + xi f(y0, t0)                  (forward Euler)
  exp_s2 (s=2):  F = y0 + xi f(y0 + xi/2 f(y0,t0), t0 + xi/2)  (midpoint)
  imp_s1 (s=1):  F = y0 + xi K,  K = f(y0 + xi K, t0 + xi)
  imp_s2 (s=2):  F = y0 + (1-g) xi K1 + g xi K2, the two-stage DIRK
                 with g = 1 - sqrt(2)/2

Training enforces the defining equation d(psi)/d(xi) = f(psi, t0 + xi) at Q
collocation points; this module assembles that residual and its Jacobian in
the output weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import StageSolverError
from .odecore import IvpSystem, TrainingDomain
from .randnet import (
    Normalizer,
    SubnetParams,
    eval_varphi,
    hidden_features,
    hidden_features_with_dxi,
)

Array = np.ndarray

DIRK_GAMMA = 1.0 - np.sqrt(2.0) / 2.0

_KIND_ORDER = {
    "exp_s0": 0,
    "exp_s1": 1,
    "exp_s2": 2,
    "imp_s1": 1,
    "imp_s2": 2,
}

KINDS = tuple(_KIND_ORDER)


def canon_kind(kind: str) -> str:
    """Normalize user spellings like 'ExpS1' or 'exp-s1' to 'exp_s1'."""
    k = kind.strip().lower().replace("-", "_")
    if not k.startswith(("exp_", "imp_")) and len(k) >= 5:
        k = k[:3] + "_" + k[3:]
    if k not in _KIND_ORDER:
        raise ValueError(f"unknown representation kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class PsiRepresentation:
    """One of the five baseline choices, with its local order s."""

    kind: str
    s: int
    dirk_gamma: float = DIRK_GAMMA

    @staticmethod
    def from_kind(kind: str) -> "PsiRepresentation":
        k = canon_kind(kind)
        return PsiRepresentation(kind=k, s=_KIND_ORDER[k])

    @property
    def implicit(self) -> bool:
        return self.kind.startswith("imp")


@dataclass
class PsiModel:
    """A (possibly trained) flow-map approximation for one training box."""

    representation: PsiRepresentation
    subnet: SubnetParams
    normalizer: Normalizer
    system: IvpSystem
    domain: TrainingDomain
    trained: bool = False
    train_report: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        n = self.system.dim
        want_in = n + (1 if self.system.autonomous else 2)
        if self.subnet.n_in != want_in:
            raise ValueError(
                f"subnet input width {self.subnet.n_in} does not match "
                f"{'autonomous' if self.system.autonomous else 'non-autonomous'} "
                f"system of dimension {n} (want {want_in})"
            )
        if self.subnet.n_out != n:
            raise ValueError("subnet output width must equal the system dimension")
        if self.normalizer.autonomous != self.system.autonomous:
            raise ValueError("normalizer and system disagree about autonomy")

    def psi(self, y0, t0, xi):
        return eval_psi(self, y0, t0, xi)


def build_model(
    system: IvpSystem,
    domain: TrainingDomain,
    kind: str,
    M: int,
    Rm: float,
    seed: int,
    delta_m: float = 1.0,
    activation: str = "gaussian",
    hidden: Optional[tuple] = None,
) -> PsiModel:
    """Assemble an untrained model from scalar hyperparameters.

    `hidden` optionally inserts extra hidden widths before the feature layer
    (default: the single-hidden-layer architecture used throughout).
    """
    from .randnet import init_subnet  # local import keeps module load cheap

    n = system.dim
    m0 = n + (1 if system.autonomous else 2)
    arch = (m0, *(hidden or ()), M, n)
    subnet = init_subnet(arch, Rm=Rm, seed=seed, activation=activation)
    nrm = Normalizer(
        y0_box=domain.y0_box,
        t0_interval=None if system.autonomous else domain.t0_interval,
        h_max=domain.h_max,
        delta_m=delta_m,
    )
    rep = PsiRepresentation.from_kind(kind)
    return PsiModel(representation=rep, subnet=subnet, normalizer=nrm,
                    system=system, domain=domain)


@dataclass(frozen=True)
class CollocationSet:
    """Q sampled points (y0, t0, xi) inside a training box."""

    y0: Array
    xi: Array
    t0: Optional[Array] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "y0", np.atleast_2d(np.asarray(self.y0, dtype=float)))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if self.t0 is not None:
            object.__setattr__(self, "t0", np.asarray(self.t0, dtype=float))

    @property
    def Q(self) -> int:
        return self.y0.shape[0]


# -- implicit stage solves ----------------------------------------------------


def _as_batch(y0, t0, xi, n):
    """Promote point inputs to batch arrays (Q, n), (Q,), (Q,)."""
    Y = np.atleast_2d(np.asarray(y0, dtype=float))
    Q = Y.shape[0]
    XI = np.broadcast_to(np.asarray(xi, dtype=float), (Q,)).astype(float)
    if t0 is None:
        T = np.zeros(Q)
    else:
        T = np.broadcast_to(np.asarray(t0, dtype=float), (Q,)).astype(float)
    return Y, T, XI, Q


def solve_stage_K(system: IvpSystem, y0, t0, xi, tol: float = 1e-12, max_iter: int = 50):
    """Solve K = f(y0 + xi*K, t0 + xi) by Newton (batched over points).

    The initial guess is K = f(y0, t0).  Tolerance is on the residual
    infinity-norm, relaxed proportionally when f itself is large so the
    stopping rule stays meaningful for stiff systems.
    """
    single = np.asarray(y0).ndim == 1
    Y, T, XI, Q = _as_batch(y0, t0, xi, system.dim)
    K = system.eval_rhs(Y, T)
    t_stage = T + XI
    eye = np.eye(system.dim)
    for it in range(max_iter):
        G = Y + XI[:, None] * K
        fG = system.eval_rhs(G, t_stage)
        g = K - fG
        scale = max(1.0, float(np.max(np.abs(fG))))
        tol_eff = max(tol, 1e-14 * scale)
        worst = float(np.max(np.abs(g)))
        if worst <= tol_eff:
            return K[0] if single else K
        A = eye - XI[:, None, None] * system.eval_jac_y(G, t_stage)
        try:
            dK = np.linalg.solve(A, -g[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise StageSolverError(f"singular stage system: {exc}") from exc
        K = K + dK
        if not np.all(np.isfinite(K)):
            bad = int(np.argwhere(~np.all(np.isfinite(K), axis=1))[0, 0])
            raise StageSolverError(f"stage Newton diverged at point {bad}")
    bad = int(np.argmax(np.max(np.abs(g), axis=1)))
    raise StageSolverError(
        f"stage Newton did not converge in {max_iter} iterations "
        f"(worst residual {worst:.3e} at point {bad})"
    )


def solve_dK_dxi(system: IvpSystem, y0, t0, xi, K):
    """d(K)/d(xi) from the linear system (I - xi df/dG) K' = (df/dG) K + df/dt."""
    single = np.asarray(y0).ndim == 1
    Y, T, XI, Q = _as_batch(y0, t0, xi, system.dim)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    t_stage = T + XI
    G = Y + XI[:, None] * K
    A = system.eval_jac_y(G, t_stage)
    ft = system.eval_jac_t(G, t_stage)
    lhs = np.eye(system.dim) - XI[:, None, None] * A
    rhs = (A @ K[..., None])[..., 0] + ft
    dK = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    return dK[0] if single else dK


def _imp_s2_stages(system, Y, T, XI, need_dxi):
    """Stage values (and xi-derivatives) of the two-stage DIRK baseline."""
    g = DIRK_GAMMA
    n = system.dim
    K1 = solve_stage_K(system, Y, T, g * XI)
    base2 = Y + (1.0 - g) * XI[:, None] * K1
    K2 = solve_stage_K(system, base2, T + (1.0 - g) * XI, g * XI)
    if not need_dxi:
        return K1, K2, None, None

    eye = np.eye(n)
    t1 = T + g * XI
    G1 = Y + g * XI[:, None] * K1
    A1 = system.eval_jac_y(G1, t1)
    ft1 = system.eval_jac_t(G1, t1)
    lhs1 = eye - g * XI[:, None, None] * A1
    rhs1 = g * ((A1 @ K1[..., None])[..., 0] + ft1)
    dK1 = np.linalg.solve(lhs1, rhs1[..., None])[..., 0]

    t2 = T + XI
    G2 = base2 + g * XI[:, None] * K2
    A2 = system.eval_jac_y(G2, t2)
    ft2 = system.eval_jac_t(G2, t2)
    # d(G2)/dxi excluding the g*xi*K2 self-term, which moves to the left side
    w = (1.0 - g) * (K1 + XI[:, None] * dK1) + g * K2
    lhs2 = eye - g * XI[:, None, None] * A2
    rhs2 = (A2 @ w[..., None])[..., 0] + ft2
    dK2 = np.linalg.solve(lhs2, rhs2[..., None])[..., 0]
    return K1, K2, dK1, dK2


def eval_F_with_dxi(model: PsiModel, y0, t0, xi, need_dxi: bool = True):
    """Baseline F (and dF/dxi when requested) for any batch of points."""
    system = model.system
    kind = model.representation.kind
    single = np.asarray(y0).ndim == 1
    Y, T, XI, Q = _as_batch(y0, t0, xi, system.dim)
    Xc = XI[:, None]

    if kind == "exp_s0":
        F = Y.copy()
        dF = np.zeros_like(Y) if need_dxi else None
    elif kind == "exp_s1":
        f0 = system.eval_rhs(Y, T)
        F = Y + Xc * f0
        dF = f0 if need_dxi else None
    elif kind == "exp_s2":
        f0 = system.eval_rhs(Y, T)
        U = Y + 0.5 * Xc * f0
        tm = T + 0.5 * XI
        f_mid = system.eval_rhs(U, tm)
        F = Y + Xc * f_mid
        if need_dxi:
            A = system.eval_jac_y(U, tm)
            ft = system.eval_jac_t(U, tm)
            dF = f_mid + Xc * (0.5 * (A @ f0[..., None])[..., 0] + 0.5 * ft)
        else:
            dF = None
    elif kind == "imp_s1":
        K = solve_stage_K(system, Y, T, XI)
        F = Y + Xc * K
        if need_dxi:
            dK = solve_dK_dxi(system, Y, T, XI, K)
            dF = K + Xc * dK
        else:
            dF = None
    elif kind == "imp_s2":
        g = DIRK_GAMMA
        K1, K2, dK1, dK2 = _imp_s2_stages(system, Y, T, XI, need_dxi)
        F = Y + (1.0 - g) * Xc * K1 + g * Xc * K2
        if need_dxi:
            dF = (1.0 - g) * (K1 + Xc * dK1) + g * (K2 + Xc * dK2)
        else:
            dF = None
    else:  # pragma: no cover - canon_kind guards this
        raise ValueError(f"unknown kind {kind}")

    if single:
        return (F[0], None if dF is None else dF[0])
    return F, dF


def eval_F(model: PsiModel, y0, t0, xi):
    """The baseline term alone (what an untrained model computes)."""
    return eval_F_with_dxi(model, y0, t0, xi, need_dxi=False)[0]


def eval_psi(model: PsiModel, y0, t0, xi):
    """psi = F + xi^(s+1) * varphi(y0, t0, xi)."""
    F = eval_F(model, y0, t0, xi)
    x_hat = model.normalizer.encode(y0, t0, xi)
    phi = hidden_features(model.subnet, x_hat)
    varphi = eval_varphi(model.subnet, phi)
    s1 = model.representation.s + 1
    pw = np.asarray(xi, dtype=float) ** s1
    if F.ndim == 2:
        pw = np.broadcast_to(np.asarray(pw), (F.shape[0],))
        return F + pw[:, None] * varphi
    return F + float(pw) * varphi


class ResidualAssembler:
    """Residual/Jacobian of the flow-map equation at fixed collocation points.

    Everything that does not depend on the output weights (baseline values,
    stage solves, hidden features and their xi-derivatives) is computed once
    at construction; per-iteration work is two matmuls plus one rhs and one
    jac_y sweep over the points.
    """

    def __init__(self, model: PsiModel, points: CollocationSet):
        self.model = model
        self.system = model.system
        self.n = model.system.dim
        self.Q = points.Q
        self.M = model.subnet.n_features
        s = model.representation.s

        Y, T, XI, _ = _as_batch(points.y0, points.t0, points.xi, self.n)
        self.t_eval = T + XI
        F, dF = eval_F_with_dxi(model, Y, points.t0, points.xi, need_dxi=True)
        self.F = F
        self.dF = dF

        x_hat = model.normalizer.encode(Y, points.t0, points.xi)
        phi, dphi = hidden_features_with_dxi(
            model.subnet, x_hat, model.normalizer.xi_scale
        )
        self.phi = phi
        self.xs1 = XI**(s + 1)          # xi^(s+1)
        # d/dxi of xi^(s+1)*varphi splits into these two feature combinations
        self.dcorr = (s + 1) * XI[:, None] ** s * phi + self.xs1[:, None] * dphi

    def psi(self, beta: Array) -> Array:
        varphi = self.phi @ beta.T
        return self.F + self.xs1[:, None] * varphi

    def residual(self, beta: Array) -> Array:
        """r = d(psi)/d(xi) - f(psi, t0 + xi), flattened point-major."""
        psi = self.psi(beta)
        dpsi = self.dF + self.dcorr @ beta.T
        r = dpsi - self.system.eval_rhs(psi, self.t_eval)
        return r.ravel()

    def jacobian(self, beta: Array) -> Array:
        return self.residual_and_jacobian(beta)[1]

    def residual_and_jacobian(self, beta: Array):
        n, Q, M = self.n, self.Q, self.M
        psi = self.psi(beta)
        dpsi = self.dF + self.dcorr @ beta.T
        r = dpsi - self.system.eval_rhs(psi, self.t_eval)
        Jf = self.system.eval_jac_y(psi, self.t_eval)

        J = np.zeros((Q, n, n, M))
        for a in range(n):
            J[:, a, a, :] = self.dcorr
        J -= (self.xs1[:, None, None, None] * Jf[..., None]) * self.phi[:, None, None, :]
        return r.ravel(), J.reshape(Q * n, n * M)


def assemble_residual(model: PsiModel, beta: Array, points: CollocationSet) -> Array:
    """Residual vector of length n*Q at the given output weights."""
    return ResidualAssembler(model, points).residual(np.asarray(beta, dtype=float))


def assemble_jacobian(model: PsiModel, beta: Array, points: CollocationSet) -> Array:
    """Jacobian (n*Q by n*M) of the residual in the flattened output weights."""
    return ResidualAssembler(model, points).jacobian(np.asarray(beta, dtype=float))
