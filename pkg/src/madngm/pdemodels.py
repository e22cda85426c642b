"""Benchmark PDEs: right-hand sides, domains and random initial conditions.

Supported problems (all periodic, scalar):

- ``kdv``      u_t = -u u_x - u_xxx / 400 on [-1, 1]
- ``burgers``  u_t = -u u_x + u_xx / (100 pi) on [0, 1]
- ``ac1d_const`` / ``ac1d_tx``  u_t = 0.001 u_xx - a(t, x)(u^3 - u) on [-d, 1+d]
- ``ac2d``     u_t = 0.001 lap(u) - 2(u^3 - u) on [0, 1]^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .neuralnet import Embedding, Periodic1D, Periodic2D, ShiftedPeriodic1D, SpatialJet

KDV_DISPERSION = 1.0 / 400.0
BURGERS_VISCOSITY = 1.0 / (100.0 * math.pi)
AC_DIFFUSION = 0.001
MAX_SHIFT = 0.2

GRF_SCALE = 7.0
GRF_POWER = 3
GRF_MODES = 64


@dataclass(frozen=True)
class DomainSpec:
    dim: int
    bounds: tuple[tuple[float, float], ...]
    shift: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 2) or len(self.bounds) != self.dim:
            raise ConfigError(f"bad domain dimension {self.dim} / bounds {self.bounds}")
        for a, b in self.bounds:
            if not a < b:
                raise ConfigError(f"domain interval must satisfy a < b, got [{a}, {b}]")
        if abs(self.shift) > MAX_SHIFT + 1e-15:
            raise ConfigError(f"domain shift {self.shift} outside [-{MAX_SHIFT}, {MAX_SHIFT}]")

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in self.bounds)

    def uniform_grid(self, n: int, endpoint: bool = True) -> np.ndarray:
        """Tensor grid with ``n`` points per axis, shape (n**dim, dim)."""
        axes = [np.linspace(a, b, n, endpoint=endpoint) for a, b in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.array([a for a, _ in self.bounds])
        hi = np.array([b for _, b in self.bounds])
        return lo + (hi - lo) * rng.random((n, self.dim))

    def describe(self) -> dict:
        return {"dim": self.dim, "bounds": [list(b) for b in self.bounds], "shift": self.shift}


def shifted_domain(shift: float) -> DomainSpec:
    return DomainSpec(1, ((-shift, 1.0 + shift),), shift)


# --------------------------------------------------------------------------
# right-hand sides


def _need(jet: SpatialJet, attr: str, problem: str):
    val = getattr(jet, attr)
    if val is None:
        raise ValueError(f"{problem} right-hand side needs jet.{attr}")
    return val


def rhs_kdv(jet: SpatialJet):
    d1 = _need(jet, "d1", "KdV")
    d3 = _need(jet, "d3", "KdV")
    return -jet.u * d1[..., 0] - KDV_DISPERSION * d3[..., 0]


def rhs_burgers(jet: SpatialJet, advection: bool = True):
    d1 = _need(jet, "d1", "Burgers")
    d2 = _need(jet, "d2", "Burgers")
    adv = jet.u * d1[..., 0] if advection else 0.0
    return -adv + BURGERS_VISCOSITY * d2[..., 0]


def rhs_ac(jet: SpatialJet, a_value):
    _need(jet, "d2", "Allen-Cahn")
    u = jet.u
    return AC_DIFFUSION * jet.laplacian - a_value * (u**3 - u)


def ac_coefficient(t, x, shift: float = 0.0, variant: str = "const"):
    """Reaction coefficient a(t, x); ``variant`` is ``"const"`` or ``"tx"``."""
    if variant == "const":
        return 2.0 * np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 2.0
    if variant == "tx":
        return 2.0 * (1.0 + t * np.sin(2.0 * math.pi * (np.asarray(x) + shift) / (1.0 + 2.0 * shift)))
    raise ConfigError(f"unknown Allen-Cahn coefficient variant {variant!r}")


# --------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class PdeProblem:
    """A benchmark equation on a concrete domain.

    ``rhs(t, xs, jet)`` evaluates f at points ``xs`` (n, dim) given the batched
    jet of the current field there.
    """

    name: str
    domain: DomainSpec
    embedding: Embedding
    final_time: float
    max_order: int
    rhs: Callable = field(compare=False, repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim


PROBLEM_NAMES = ("kdv", "burgers", "ac1d_const", "ac1d_tx", "ac2d")


def make_problem(name: str, shift: float = 0.0, advection: bool = True) -> PdeProblem:
    """Build a benchmark problem by name.

    ``shift`` only applies to the 1D Allen-Cahn problems. ``advection=False``
    drops the nonlinear Burgers term (used for linear checks).
    """
    if name == "kdv":
        return PdeProblem(
            "kdv", DomainSpec(1, ((-1.0, 1.0),)), Periodic1D(1.0), 1.0, 3, lambda t, xs, jet: rhs_kdv(jet)
        )
    if name == "burgers":
        return PdeProblem(
            "burgers",
            DomainSpec(1, ((0.0, 1.0),)),
            Periodic1D(0.5),
            1.0,
            2,
            lambda t, xs, jet: rhs_burgers(jet, advection),
        )
    if name in ("ac1d_const", "ac1d_tx"):
        variant = name.rsplit("_", 1)[1]

        def rhs(t, xs, jet):
            return rhs_ac(jet, ac_coefficient(t, xs[:, 0], shift, variant))

        return PdeProblem(name, shifted_domain(shift), ShiftedPeriodic1D(shift), 2.0, 2, rhs)
    if name == "ac2d":
        return PdeProblem(
            "ac2d",
            DomainSpec(2, ((0.0, 1.0), (0.0, 1.0))),
            Periodic2D(),
            2.0,
            2,
            lambda t, xs, jet: rhs_ac(jet, 2.0),
        )
    raise ConfigError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")


# --------------------------------------------------------------------------
# initial conditions


@dataclass(frozen=True)
class TrigField1D:
    """alpha1 sin(pi x) + alpha2 cos(pi x)."""

    alpha1: float
    alpha2: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        return self.alpha1 * np.sin(math.pi * x) + self.alpha2 * np.cos(math.pi * x)

    def to_dict(self) -> dict:
        return {"kind": "kdv_trig", "alpha1": self.alpha1, "alpha2": self.alpha2}


@dataclass(frozen=True)
class FourierField1D:
    """a0 + sum_k a_k cos(2 pi k y) + b_k sin(2 pi k y), y = (x + shift)/(1 + 2 shift)."""

    a0: float
    a: tuple[float, ...]
    b: tuple[float, ...]
    shift: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        y = (x + self.shift) / (1.0 + 2.0 * self.shift)
        k = np.arange(1, len(self.a) + 1)
        phase = 2.0 * math.pi * np.multiply.outer(y, k)
        return self.a0 + np.cos(phase) @ np.asarray(self.a) + np.sin(phase) @ np.asarray(self.b)

    def to_dict(self) -> dict:
        return {"kind": "grf", "a0": self.a0, "a": list(self.a), "b": list(self.b), "shift": self.shift}


@dataclass(frozen=True)
class TrigField2D:
    """0.001 * sum_{i,j in -1..1} alpha_ij sin(.) + beta_ij cos(2pi i x + 2pi j y).

    ``sin_reading="as_written"`` uses sin(2pi i x + 2pi i y) for the sine
    term; ``"ij"`` uses sin(2pi i x + 2pi j y).
    """

    alpha: tuple[tuple[float, ...], ...]
    beta: tuple[tuple[float, ...], ...]
    sin_reading: str = "as_written"

    def __call__(self, xy):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
        out = np.zeros(x.shape)
        for ii, i in enumerate((-1, 0, 1)):
            for jj, j in enumerate((-1, 0, 1)):
                j_sin = i if self.sin_reading == "as_written" else j
                out += self.alpha[ii][jj] * np.sin(2 * math.pi * (i * x + j_sin * y))
                out += self.beta[ii][jj] * np.cos(2 * math.pi * (i * x + j * y))
        return 0.001 * out

    def to_dict(self) -> dict:
        return {
            "kind": "ac2d_trig",
            "alpha": [list(r) for r in self.alpha],
            "beta": [list(r) for r in self.beta],
            "sin_reading": self.sin_reading,
        }


def field_from_dict(d: dict):
    kind = d["kind"]
    if kind == "kdv_trig":
        return TrigField1D(d["alpha1"], d["alpha2"])
    if kind == "grf":
        return FourierField1D(d["a0"], tuple(d["a"]), tuple(d["b"]), d.get("shift", 0.0))
    if kind == "ac2d_trig":
        return TrigField2D(
            tuple(tuple(r) for r in d["alpha"]), tuple(tuple(r) for r in d["beta"]), d["sin_reading"]
        )
    raise ConfigError(f"unknown field kind {kind!r}")


def grf_mode_variance(k) -> np.ndarray:
    """Total variance of Fourier mode k of N(0, 7^2 (-Lap + 7^2)^-3) on the unit period."""
    k = np.asarray(k, dtype=float)
    return GRF_SCALE**2 / ((2.0 * math.pi * k) ** 2 + GRF_SCALE**2) ** GRF_POWER


@dataclass(frozen=True)
class InitialConditionFamily:
    """Random initial-condition law.

    variant: ``"kdv_trig"``, ``"grf"`` or ``"ac2d_trig"``. ``shift`` maps the
    GRF's unit period onto [-shift, 1+shift].
    """

    variant: str
    shift: float = 0.0
    n_modes: int = GRF_MODES
    sin_reading: str = "as_written"

    def __post_init__(self):
        if self.variant not in ("kdv_trig", "grf", "ac2d_trig"):
            raise ConfigError(f"unknown initial-condition family {self.variant!r}")
        if self.sin_reading not in ("as_written", "ij"):
            raise ConfigError(f"sin_reading must be 'as_written' or 'ij', got {self.sin_reading!r}")

    def draw(self, rng: np.random.Generator):
        if self.variant == "kdv_trig":
            a1, a2 = rng.uniform(-0.5, 0.5, size=2)
            return TrigField1D(float(a1), float(a2))
        if self.variant == "grf":
            k = np.arange(1, self.n_modes + 1)
            std = np.sqrt(grf_mode_variance(k) / 2.0)
            a0 = rng.normal(0.0, math.sqrt(grf_mode_variance(0)))
            a = rng.normal(0.0, 1.0, self.n_modes) * std
            b = rng.normal(0.0, 1.0, self.n_modes) * std
            return FourierField1D(float(a0), tuple(a.tolist()), tuple(b.tolist()), self.shift)
        alpha = rng.uniform(0.0, 1.0, (3, 3))
        beta = rng.uniform(0.0, 1.0, (3, 3))
        return TrigField2D(tuple(map(tuple, alpha.tolist())), tuple(map(tuple, beta.tolist())), self.sin_reading)


def family_for(problem_name: str, shift: float = 0.0, sin_reading: str = "as_written") -> InitialConditionFamily:
    if problem_name == "kdv":
        return InitialConditionFamily("kdv_trig")
    if problem_name == "ac2d":
        return InitialConditionFamily("ac2d_trig", sin_reading=sin_reading)
    if problem_name in ("burgers", "ac1d_const", "ac1d_tx"):
        return InitialConditionFamily("grf", shift=shift)
    raise ConfigError(f"unknown problem {problem_name!r}")


def sample_initial_condition(family: InitialConditionFamily, seed) -> Callable:
    """Draw one initial field u0(x) from ``family``; deterministic in ``seed``."""
    return family.draw(np.random.default_rng(seed))


def sample_shift(seed) -> float:
    """Random Allen-Cahn domain shift, uniform on [-0.2, 0.2]."""
    return float(np.random.default_rng(seed).uniform(-MAX_SHIFT, MAX_SHIFT))
