"""Low-overhead single-point evaluation of flow-map models.

`eval_psi` is built for batches: every call pays for input promotion,
normalization, and shape bookkeeping, which dominates when a march makes
tens of thousands of single-point calls.  `compile_evaluator` strips that
overhead by folding the input normalization into the first hidden layer
once (A = W * scale, d = W @ shift + b) and dispatching the whole
varphi evaluation to a numba kernel.  Without numba the same folded math
runs through a lean numpy path; results are bit-identical either way up
to floating-point non-associativity (well below 1e-14 in practice).

The evaluator captures the output weights at compile time.  Retraining a
model after compiling requires compiling again.
"""

from __future__ import annotations

import numpy as np

from .psirep import DIRK_GAMMA, PsiModel, eval_psi, solve_stage_K

try:  # numba is optional at runtime; the numpy path keeps the API alive
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None
    HAVE_NUMBA = False

Array = np.ndarray


def _varphi_gaussian_py(A, d, beta, x):
    z = A @ x + d
    return beta @ np.exp(-z * z)


def _varphi_tanh_py(A, d, beta, x):
    return beta @ np.tanh(A @ x + d)


if HAVE_NUMBA:

    @njit(cache=True)
    def _varphi_gaussian(A, d, beta, x):  # pragma: no cover - compiled
        M, m0 = A.shape
        n = beta.shape[0]
        phi = np.empty(M)
        for j in range(M):
            z = d[j]
            for k in range(m0):
                z += A[j, k] * x[k]
            phi[j] = np.exp(-z * z)
        out = np.zeros(n)
        for i in range(n):
            acc = 0.0
            for j in range(M):
                acc += beta[i, j] * phi[j]
            out[i] = acc
        return out

    @njit(cache=True)
    def _varphi_tanh(A, d, beta, x):  # pragma: no cover - compiled
        M, m0 = A.shape
        n = beta.shape[0]
        phi = np.empty(M)
        for j in range(M):
            z = d[j]
            for k in range(m0):
                z += A[j, k] * x[k]
            phi[j] = np.tanh(z)
        out = np.zeros(n)
        for i in range(n):
            acc = 0.0
            for j in range(M):
                acc += beta[i, j] * phi[j]
            out[i] = acc
        return out

    _KERNELS = {"gaussian": _varphi_gaussian, "tanh": _varphi_tanh}
else:
    _KERNELS = {}

_PY_KERNELS = {"gaussian": _varphi_gaussian_py, "tanh": _varphi_tanh_py}


def _input_affine(model: PsiModel):
    """Per-coordinate scale/shift so that x_hat = scale * x_raw + shift."""
    nrm = model.normalizer
    a, b = nrm.y0_box[:, 0], nrm.y0_box[:, 1]
    scale = list(2.0 / (b - a))
    shift = list(-(a + b) / (b - a))
    if not nrm.autonomous:
        T0, Tf = nrm.t0_interval
        scale.append(2.0 / (Tf - T0))
        shift.append(-(T0 + Tf) / (Tf - T0))
    scale.append(nrm.xi_scale)
    shift.append(0.0)
    return np.array(scale), np.array(shift)


def compile_evaluator(model: PsiModel, force_numpy: bool = False):
    """Build a fast ``fn(y0, t0, xi) -> psi`` closure for single points.

    Batched inputs (y0 with two dimensions) fall back to :func:`eval_psi`
    transparently.  The returned callable exposes ``fn.compiled`` (True when
    the numba kernel is active) and ``fn.model``.
    """
    system = model.system
    n = system.dim
    rep = model.representation
    kind = rep.kind
    s1 = rep.s + 1
    g = rep.dirk_gamma
    autonomous = system.autonomous

    scale, shift = _input_affine(model)
    W0 = model.subnet.hidden_weights[0]
    b0 = model.subnet.hidden_biases[0]
    A = np.ascontiguousarray(W0 * scale)
    d = np.ascontiguousarray(W0 @ shift + b0)
    beta = np.ascontiguousarray(model.subnet.beta, dtype=float)
    deep = len(model.subnet.hidden_weights) > 1

    use_kernel = HAVE_NUMBA and not force_numpy and not deep
    if use_kernel:
        kernel = _KERNELS[model.subnet.activation]
    else:
        kernel = _PY_KERNELS[model.subnet.activation]

    if deep:
        # multi-hidden-layer nets keep the fold for layer 0 only; the rest
        # runs through numpy (rare configuration, not the hot path)
        from .randnet import ACTIVATIONS

        act, _ = ACTIVATIONS[model.subnet.activation]
        rest = list(
            zip(model.subnet.hidden_weights[1:], model.subnet.hidden_biases[1:])
        )

        def varphi_of(x):
            h = act(A @ x + d)
            for W, bb in rest:
                h = act(h @ W.T + bb)
            return beta @ h

    else:

        def varphi_of(x):
            return kernel(A, d, beta, x)

    rhs = system.eval_rhs

    if kind == "exp_s0":

        def baseline(y, t, xi):
            return y

    elif kind == "exp_s1":

        def baseline(y, t, xi):
            return y + xi * rhs(y, t)

    elif kind == "exp_s2":

        def baseline(y, t, xi):
            f0 = rhs(y, t)
            return y + xi * rhs(y + (0.5 * xi) * f0, t + 0.5 * xi)

    elif kind == "imp_s1":

        def baseline(y, t, xi):
            K = solve_stage_K(system, y, t, xi)
            return y + xi * K

    else:  # imp_s2

        def baseline(y, t, xi):
            K1 = solve_stage_K(system, y, t, g * xi)
            base2 = y + (1.0 - g) * xi * K1
            K2 = solve_stage_K(system, base2, t + (1.0 - g) * xi, g * xi)
            return y + (1.0 - g) * xi * K1 + g * xi * K2

    m0 = model.subnet.n_in

    def evaluate(y0, t0, xi):
        y = np.asarray(y0, dtype=float)
        if y.ndim != 1:
            return eval_psi(model, y0, t0, xi)
        xi = float(xi)
        x = np.empty(m0)
        x[:n] = y
        if not autonomous:
            x[n] = t0
        x[-1] = xi
        return baseline(y, t0, xi) + (xi**s1) * varphi_of(x)

    evaluate.compiled = use_kernel
    evaluate.model = model
    evaluate.beta_ref = model.subnet.beta

    # run once so JIT cost is paid here, not in the first timed call
    y_mid = model.normalizer.y0_box.mean(axis=1)
    t_mid = 0.0 if autonomous else float(np.mean(model.domain.t0_interval))
    evaluate(y_mid, t_mid, 0.0)
    return evaluate


def cached_evaluator(model: PsiModel):
    """compile_evaluator with per-model memoization.

    The cache is invalidated when the output-weight array is rebound (as
    training does); in-place writes to an existing beta are not detected.
    """
    ev = getattr(model, "_fast_eval", None)
    if ev is None or ev.beta_ref is not model.subnet.beta:
        ev = compile_evaluator(model)
        model._fast_eval = ev
    return ev
