"""Randomized feed-forward subnet with frozen hidden layers.

Only the output weights beta are ever trained; hidden weights and biases are
drawn once from Uniform[-Rm, Rm] with a counter-based Philox stream, so the
same (arch, Rm, seed) triple reproduces the same parameters bit-for-bit on
any platform.  The output layer applies no activation and carries no bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

Array = np.ndarray

GENERATOR_NAME = "philox"  # fixed in the model file format


def _gaussian(x):
    return np.exp(-np.square(x))


def _gaussian_prime(x):
    return -2.0 * x * np.exp(-np.square(x))


def _tanh_prime(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "gaussian": (_gaussian, _gaussian_prime),
    "tanh": (np.tanh, _tanh_prime),
}


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for `seed`; stream k is the k-th jump ahead.

    Stream 0 draws hidden parameters, stream 1 draws collocation points, so
    the two never overlap for the same seed.
    """
    bits = np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    if stream:
        bits = bits.jumped(stream)
    return np.random.Generator(bits)


@dataclass
class SubnetParams:
    """Parameters of one phi-subnet.

    arch = [m0, ..., mL]: m0 is the input width (n+2, or n+1 for autonomous
    problems), mL = n the output width, and M = m_{L-1} the feature count.
    hidden_weights[l] has shape (m_{l+1}, m_l) for l < L-1; beta is (n, M).
    """

    arch: tuple
    Rm: float
    seed: int
    activation: str = "gaussian"
    hidden_weights: List[Array] = field(default_factory=list)
    hidden_biases: List[Array] = field(default_factory=list)
    beta: Array = None

    @property
    def n_features(self) -> int:
        return self.arch[-2]

    @property
    def n_out(self) -> int:
        return self.arch[-1]

    @property
    def n_in(self) -> int:
        return self.arch[0]


def init_subnet(arch, Rm: float, seed: int, activation: str = "gaussian") -> SubnetParams:
    """Draw frozen hidden parameters and a zero beta.

    Weights then biases, layer by layer, all Uniform[-Rm, Rm] from one Philox
    stream.  beta starts at zero so an untrained model reduces exactly to its
    baseline term.
    """
    arch = tuple(int(m) for m in arch)
    if len(arch) < 3:
        raise ValueError("arch needs at least [m0, M, n]")
    if any(m < 1 for m in arch):
        raise ValueError("arch entries must be positive")
    if Rm <= 0:
        raise ValueError("Rm must be positive")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")

    rng = make_rng(seed, stream=0)
    weights, biases = [], []
    for l in range(len(arch) - 2):
        weights.append(rng.uniform(-Rm, Rm, size=(arch[l + 1], arch[l])))
        biases.append(rng.uniform(-Rm, Rm, size=arch[l + 1]))
    beta = np.zeros((arch[-1], arch[-2]))
    return SubnetParams(
        arch=arch,
        Rm=float(Rm),
        seed=int(seed),
        activation=activation,
        hidden_weights=weights,
        hidden_biases=biases,
        beta=beta,
    )


@dataclass(frozen=True)
class Normalizer:
    """Affine input maps: each y0 component and t0 onto [-1, 1], xi scaled by
    1/(delta_m * h_max) so [0, delta_m*h_max] lands on [0, 1].

    Small delta_m stretches the xi axis (helpful on stiff problems); the same
    pure scaling applies to backward training where xi <= 0.
    """

    y0_box: Array
    h_max: float
    t0_interval: Optional[tuple] = None
    delta_m: float = 1.0

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.y0_box, dtype=float))
        object.__setattr__(self, "y0_box", box)
        if self.delta_m <= 0 or self.h_max <= 0:
            raise ValueError("delta_m and h_max must be positive")

    @property
    def autonomous(self) -> bool:
        return self.t0_interval is None

    @property
    def n_in(self) -> int:
        return self.y0_box.shape[0] + (1 if self.autonomous else 2)

    @property
    def xi_scale(self) -> float:
        """d(xi_hat)/d(xi)."""
        return 1.0 / (self.delta_m * self.h_max)

    def encode(self, y0: Array, t0, xi) -> Array:
        """Map raw (y0, t0, xi) to the network input vector(s).

        Accepts a single point (y0 shape (n,)) or a batch (B, n) with t0 and
        xi scalars or length-B arrays.  t0 is ignored for autonomous maps.
        """
        y0 = np.asarray(y0, dtype=float)
        a, b = self.y0_box[:, 0], self.y0_box[:, 1]
        y_hat = (2.0 * y0 - (a + b)) / (b - a)
        batch_shape = y0.shape[:-1]
        cols = [y_hat]
        if not self.autonomous:
            T0, Tf = self.t0_interval
            t_hat = (2.0 * np.asarray(t0, dtype=float) - (T0 + Tf)) / (Tf - T0)
            cols.append(_column(t_hat, batch_shape))
        cols.append(_column(np.asarray(xi, dtype=float) * self.xi_scale, batch_shape))
        return np.concatenate(cols, axis=-1)


def _column(v: Array, batch_shape: tuple) -> Array:
    # scalar -> one trailing column broadcast over the batch; array -> (..., 1)
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.broadcast_to(v, batch_shape + (1,))
    return v[..., None]


def hidden_features(subnet: SubnetParams, x_hat: Array) -> Array:
    """phi(x_hat): activations of the last hidden layer, shape (..., M)."""
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape[-1] != subnet.n_in:
        raise ValueError(
            f"input width {x_hat.shape[-1]} does not match arch m0={subnet.n_in}"
        )
    act, _ = ACTIVATIONS[subnet.activation]
    a = x_hat
    for W, b in zip(subnet.hidden_weights, subnet.hidden_biases):
        a = act(a @ W.T + b)
    return a


def hidden_features_with_dxi(subnet: SubnetParams, x_hat: Array, xi_scale: float):
    """(phi, dphi/dxi) in one forward pass.

    The xi-derivative is propagated forward-mode: the seed tangent is
    xi_scale on the last input coordinate (the chain-rule factor from the
    normalization), zero elsewhere.  Exact for any depth.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape[-1] != subnet.n_in:
        raise ValueError(
            f"input width {x_hat.shape[-1]} does not match arch m0={subnet.n_in}"
        )
    act, act_prime = ACTIVATIONS[subnet.activation]
    a = x_hat
    v = np.zeros_like(x_hat)
    v[..., -1] = xi_scale
    for W, b in zip(subnet.hidden_weights, subnet.hidden_biases):
        z = a @ W.T + b
        v = act_prime(z) * (v @ W.T)
        a = act(z)
    return a, v


def hidden_features_dxi(subnet: SubnetParams, x_hat: Array, xi_scale: float) -> Array:
    return hidden_features_with_dxi(subnet, x_hat, xi_scale)[1]


def eval_varphi(subnet: SubnetParams, phi: Array) -> Array:
    """varphi_i = beta_i . phi  (linear output layer, no bias)."""
    return np.asarray(phi) @ subnet.beta.T
