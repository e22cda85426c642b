"""Latent-conditioned MLP ansatz U(theta, z, x).

The network input is ``concat(embed(x), z)``; hidden layers use tanh and the
output layer is linear with a single unit. All parameters live in one flat
float64 vector whose layout is, layer by layer, the row-major weight block
``(w_out, w_in)`` followed by the bias block ``(w_out,)``.

Spatial derivatives are propagated as truncated univariate Taylor jets along
each coordinate axis, so third derivatives are exact up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError

__all__ = [
    "NetworkArch",
    "Periodic1D",
    "ShiftedPeriodic1D",
    "Periodic2D",
    "Identity",
    "SpatialJet",
    "init_params",
    "flatten",
    "evaluate",
    "forward",
    "param_jacobian",
    "spatial_jet",
    "spatial_jets",
    "input_vjp",
]


@dataclass(frozen=True)
class NetworkArch:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ConfigError(f"all layer widths must be >= 1, got {self.widths}")
        if self.output_dim != 1:
            raise ConfigError("only scalar output (output_dim=1) is supported")
        if self.activation != "tanh":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(w_in, w_out) for every affine layer."""
        w = self.widths
        return list(zip(w[:-1], w[1:]))

    @property
    def n_params(self) -> int:
        return sum((w_in + 1) * w_out for w_in, w_out in self.layer_shapes)

    def blocks(self) -> list[tuple[slice, slice]]:
        """Slices of the weight and bias block of each layer in the flat vector."""
        out, pos = [], 0
        for w_in, w_out in self.layer_shapes:
            w_sl = slice(pos, pos + w_in * w_out)
            pos += w_in * w_out
            b_sl = slice(pos, pos + w_out)
            pos += w_out
            out.append((w_sl, b_sl))
        return out

    def unflatten(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Return ``[(W, b), ...]`` views into ``theta``."""
        theta = np.asarray(theta)
        if theta.shape != (self.n_params,):
            raise ConfigError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        return [
            (theta[w_sl].reshape(w_out, w_in), theta[b_sl])
            for (w_sl, b_sl), (w_in, w_out) in zip(self.blocks(), self.layer_shapes)
        ]

    def describe(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
            "activation": self.activation,
        }


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers]).astype(np.float64)


def init_params(arch: NetworkArch, seed: int) -> np.ndarray:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(arch.n_params)
    for (w_sl, _), (w_in, w_out) in zip(arch.blocks(), arch.layer_shapes):
        limit = math.sqrt(6.0 / (w_in + w_out))
        theta[w_sl] = rng.uniform(-limit, limit, size=w_in * w_out)
    return theta


# --------------------------------------------------------------------------
# embeddings


def _sincos_jet(omega: float, phase_arg: np.ndarray, order: int) -> np.ndarray:
    """Derivatives 0..order of [sin(omega*s), cos(omega*s)] w.r.t. s; shape (order+1, n, 2)."""
    out = np.empty((order + 1, phase_arg.shape[0], 2))
    arg = omega * phase_arg
    s, c = np.sin(arg), np.cos(arg)
    # d^m sin = omega^m sin(. + m pi/2), cycling through (s, c, -s, -c)
    cyc_sin = (s, c, -s, -c)
    cyc_cos = (c, -s, -c, s)
    for m in range(order + 1):
        scale = omega**m
        out[m, :, 0] = scale * cyc_sin[m % 4]
        out[m, :, 1] = scale * cyc_cos[m % 4]
    return out


@dataclass(frozen=True)
class Periodic1D:
    """[sin(pi x / L), cos(pi x / L)]; period 2L."""

    half_width: float = 1.0
    dim = 1
    n_features = 2

    @property
    def period(self) -> tuple[float, ...]:
        return (2.0 * self.half_width,)

    def feature_jet(self, xs: np.ndarray, axis: int, order: int) -> np.ndarray:
        return _sincos_jet(math.pi / self.half_width, xs[:, 0], order)


@dataclass(frozen=True)
class ShiftedPeriodic1D:
    """[sin(pi (x+d)/(1+2d)), cos(pi (x+d)/(1+2d))] for the domain [-d, 1+d].

    The feature period is 2(1+2d), i.e. twice the domain length.
    """

    shift: float = 0.0
    dim = 1
    n_features = 2

    @property
    def period(self) -> tuple[float, ...]:
        return (2.0 * (1.0 + 2.0 * self.shift),)

    def feature_jet(self, xs: np.ndarray, axis: int, order: int) -> np.ndarray:
        scale = 1.0 + 2.0 * self.shift
        return _sincos_jet(math.pi / scale, xs[:, 0] + self.shift, order)


@dataclass(frozen=True)
class Periodic2D:
    """[sin 2pi x, cos 2pi x, sin 2pi y, cos 2pi y] on the unit square."""

    dim = 2
    n_features = 4

    @property
    def period(self) -> tuple[float, ...]:
        return (1.0, 1.0)

    def feature_jet(self, xs: np.ndarray, axis: int, order: int) -> np.ndarray:
        n = xs.shape[0]
        out = np.zeros((order + 1, n, 4))
        other = 1 - axis
        along = _sincos_jet(2 * math.pi, xs[:, axis], order)
        fixed = _sincos_jet(2 * math.pi, xs[:, other], 0)[0]
        cols = slice(2 * axis, 2 * axis + 2)
        out[:, :, cols] = along
        out[0, :, 2 * other : 2 * other + 2] = fixed
        return out


@dataclass(frozen=True)
class Identity:
    """Raw coordinates as features."""

    dim: int = 1

    @property
    def n_features(self) -> int:
        return self.dim

    @property
    def period(self) -> None:
        return None

    def feature_jet(self, xs: np.ndarray, axis: int, order: int) -> np.ndarray:
        out = np.zeros((order + 1, xs.shape[0], self.dim))
        out[0] = xs
        if order >= 1:
            out[1, :, axis] = 1.0
        return out


Embedding = Union[Periodic1D, ShiftedPeriodic1D, Periodic2D, Identity]


# --------------------------------------------------------------------------
# forward / reverse passes


def as_points(xs, dim: int) -> np.ndarray:
    """Normalize a point or list of points to a float array of shape (n, dim)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 0:
        xs = xs.reshape(1, 1)
    elif xs.ndim == 1:
        xs = xs.reshape(-1, 1) if dim == 1 else xs.reshape(1, -1)
    if xs.shape[1] != dim:
        raise ConfigError(f"points have {xs.shape[1]} coordinates, embedding expects {dim}")
    return xs


def _check(arch: NetworkArch, emb: Embedding, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if emb.n_features + z.size != arch.input_dim:
        raise ConfigError(
            f"embedding ({emb.n_features}) + latent ({z.size}) != network input_dim ({arch.input_dim})"
        )
    return z


def _inputs(arch, emb, z, xs):
    """Network inputs for points xs with a shared latent code or per-point codes."""
    feats = emb.feature_jet(xs, 0, 0)[0]
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = _check(arch, emb, z)
        zs = np.broadcast_to(z, (xs.shape[0], z.size))
    else:
        zs = z
        if emb.n_features + zs.shape[1] != arch.input_dim:
            raise ConfigError("latent codes do not match network input_dim")
    return np.concatenate([feats, zs], axis=1)


def _forward_cache(arch: NetworkArch, theta, h: np.ndarray):
    """Run the MLP on inputs ``h`` (n, input_dim); return (output, activations)."""
    layers = arch.unflatten(theta)
    acts = [h]
    for W, b in layers[:-1]:
        h = np.tanh(h @ W.T + b)
        acts.append(h)
    W, b = layers[-1]
    return (h @ W.T + b)[:, 0], acts


def evaluate(arch: NetworkArch, theta, emb: Embedding, z, xs) -> np.ndarray:
    """U(theta, z, x) at every point in ``xs``; returns shape (n,)."""
    xs = as_points(xs, emb.dim)
    u, _ = _forward_cache(arch, theta, _inputs(arch, emb, z, xs))
    return u


def forward(arch: NetworkArch, theta, emb: Embedding, z, x) -> float:
    """Scalar network output at a single point."""
    return float(evaluate(arch, theta, emb, z, x)[0])


def _backprop_deltas(arch, layers, acts):
    """Per-point sensitivities dU/d(pre-activation) for every layer, output first."""
    n = acts[0].shape[0]
    delta = np.ones((n, 1))
    deltas = [delta]
    for li in range(len(layers) - 1, 0, -1):
        W, _ = layers[li]
        h = acts[li]
        delta = (delta @ W) * (1.0 - h * h)
        deltas.append(delta)
    deltas.reverse()
    return deltas


def param_jacobian(arch: NetworkArch, theta, emb: Embedding, z, xs) -> np.ndarray:
    """Rows are grad_theta U(theta, z, x_j); shape (len(xs), p)."""
    xs = as_points(xs, emb.dim)
    if xs.shape[0] == 0:
        raise ConfigError("param_jacobian needs at least one point")
    layers = arch.unflatten(theta)
    _, acts = _forward_cache(arch, theta, _inputs(arch, emb, z, xs))
    deltas = _backprop_deltas(arch, layers, acts)
    n = xs.shape[0]
    J = np.empty((n, arch.n_params))
    for (w_sl, b_sl), delta, h_in in zip(arch.blocks(), deltas, acts):
        J[:, w_sl] = (delta[:, :, None] * h_in[:, None, :]).reshape(n, -1)
        J[:, b_sl] = delta
    return J


def input_vjp(arch: NetworkArch, theta, inputs: np.ndarray, cotangent: np.ndarray):
    """Reverse pass of ``sum_j cotangent_j * U(inputs_j)``.

    Returns ``(output, grad_theta, grad_inputs)``; ``grad_inputs`` has the
    shape of ``inputs``. Used by the auto-decoder training losses.
    """
    layers = arch.unflatten(theta)
    u, acts = _forward_cache(arch, theta, inputs)
    grad = np.empty(arch.n_params)
    g = cotangent.reshape(-1, 1)
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        w_sl, b_sl = arch.blocks()[li]
        grad[w_sl] = (g.T @ acts[li]).ravel()
        grad[b_sl] = g.sum(axis=0)
        g = g @ W
        if li > 0:
            h = acts[li]
            g = g * (1.0 - h * h)
    return u, grad, g


# --------------------------------------------------------------------------
# Taylor jets


@dataclass
class SpatialJet:
    """Value and pure spatial derivatives of the ansatz.

    For a batch of n points, ``u`` has shape (n,) and ``d1``, ``d2``, ``d3``
    have shape (n, dim). Orders above the requested maximum are ``None``.
    """

    u: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None

    @property
    def laplacian(self) -> np.ndarray:
        if self.d2 is None:
            raise ValueError("jet has no second derivatives")
        return self.d2.sum(axis=-1)

    def at(self, j: int) -> "SpatialJet":
        """Jet of the j-th point of a batch."""
        pick = lambda a: None if a is None else a[j]
        return SpatialJet(self.u[j], pick(self.d1), pick(self.d2), pick(self.d3))


def _tanh_jet(a: list[np.ndarray], order: int) -> list[np.ndarray]:
    """Compose tanh with a univariate jet (derivatives, not normalized coefficients)."""
    t = np.tanh(a[0])
    out = [t]
    if order == 0:
        return out
    s1 = 1.0 - t * t  # tanh'
    out.append(s1 * a[1])
    if order == 1:
        return out
    s2 = -2.0 * t * s1  # tanh''
    out.append(s2 * a[1] ** 2 + s1 * a[2])
    if order == 2:
        return out
    s3 = s1 * (6.0 * t * t - 2.0)  # tanh'''
    out.append(s3 * a[1] ** 3 + 3.0 * s2 * a[1] * a[2] + s1 * a[3])
    return out


def _axis_jet(arch, layers, emb, zs, xs, axis, order) -> list[np.ndarray]:
    feats = emb.feature_jet(xs, axis, order)
    n = xs.shape[0]
    h = [np.concatenate([feats[0], zs], axis=1)]
    pad = np.zeros((n, zs.shape[1]))
    for m in range(1, order + 1):
        h.append(np.concatenate([feats[m], pad], axis=1))
    for W, b in layers[:-1]:
        a = [hm @ W.T for hm in h]
        a[0] = a[0] + b
        h = _tanh_jet(a, order)
    W, b = layers[-1]
    out = [(hm @ W.T)[:, 0] for hm in h]
    out[0] = out[0] + b[0]
    return out


def spatial_jets(arch: NetworkArch, theta, emb: Embedding, z, xs, max_order: int) -> SpatialJet:
    """Batched jets of x -> U(theta, z, embed(x)) up to ``max_order`` per axis."""
    if max_order not in (1, 2, 3):
        raise ConfigError(f"max_order must be 1, 2 or 3, got {max_order}")
    if max_order == 3 and emb.dim != 1:
        raise ConfigError("third-order jets are only supported in 1D")
    xs = as_points(xs, emb.dim)
    z = _check(arch, emb, z)
    zs = np.broadcast_to(z, (xs.shape[0], z.size))
    layers = arch.unflatten(theta)
    per_axis = [_axis_jet(arch, layers, emb, zs, xs, ax, max_order) for ax in range(emb.dim)]
    derivs = [np.stack([pa[m] for pa in per_axis], axis=1) for m in range(1, max_order + 1)]
    derivs += [None] * (3 - max_order)
    return SpatialJet(per_axis[0][0], *derivs)


def spatial_jet(arch: NetworkArch, theta, emb: Embedding, z, x, max_order: int) -> SpatialJet:
    """Jet at a single point."""
    return spatial_jets(arch, theta, emb, z, x, max_order).at(0)
