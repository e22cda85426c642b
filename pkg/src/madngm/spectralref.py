"""Fourier pseudospectral reference solvers and the MSE metric.

Every benchmark domain is periodic, so fields are stored on a uniform grid
that excludes the duplicated right endpoint. Time integration is classical
RK4 in Fourier space; KdV uses the integrating-factor form so its dispersive
term is exponentiated exactly. Nonlinear terms are dealiased with the 2/3
rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InstabilityError
from .pdemodels import (
    AC_DIFFUSION,
    BURGERS_VISCOSITY,
    KDV_DISPERSION,
    DomainSpec,
    PdeProblem,
    ac_coefficient,
)

RK4_REAL_AXIS_LIMIT = 2.78
GROWTH_LIMIT = 1e6


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid with ``n_modes`` points per axis on ``domain``."""

    domain: DomainSpec
    n_modes: int

    def __post_init__(self):
        if self.n_modes < 2 or self.n_modes % 2:
            raise ConfigError(f"n_modes must be even and >= 2, got {self.n_modes}")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_modes,) * self.dim

    def axis(self, i: int) -> np.ndarray:
        a, b = self.domain.bounds[i]
        return a + (b - a) * np.arange(self.n_modes) / self.n_modes

    @property
    def points(self) -> np.ndarray:
        """Grid points in C order, shape (n_modes**dim, dim)."""
        mesh = np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def wavenumbers(self, i: int) -> np.ndarray:
        """Angular wavenumbers along axis i, laid out for ``rfftn`` (last axis halved)."""
        length = self.domain.lengths[i]
        if i == self.dim - 1:
            m = np.fft.rfftfreq(self.n_modes, 1.0 / self.n_modes)
        else:
            m = np.fft.fftfreq(self.n_modes, 1.0 / self.n_modes)
        return 2.0 * math.pi * m / length

    def _k_mesh(self):
        ks = [self.wavenumbers(i) for i in range(self.dim)]
        return np.meshgrid(*ks, indexing="ij")

    def dealias_mask(self) -> np.ndarray:
        """True for modes kept by the 2/3 rule."""
        cut = self.n_modes // 3
        masks = []
        for i in range(self.dim):
            if i == self.dim - 1:
                m = np.fft.rfftfreq(self.n_modes, 1.0 / self.n_modes)
            else:
                m = np.fft.fftfreq(self.n_modes, 1.0 / self.n_modes)
            masks.append(np.abs(m) <= cut)
        mesh = np.meshgrid(*masks, indexing="ij")
        return np.logical_and.reduce(mesh)


@dataclass
class GridSolution:
    """Field snapshots on ``points``: ``fields`` has shape (n_times, n_points)."""

    times: np.ndarray
    fields: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        fields = np.asarray(self.fields, dtype=np.float64)
        self.fields = fields.reshape(len(self.times), -1 if fields.size else self.points.shape[0])
        if self.fields.shape[1] != self.points.shape[0] and self.fields.size:
            raise ValueError(f"fields {self.fields.shape} do not match {self.points.shape[0]} points")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def at(self, t: float, atol: float = 1e-9) -> np.ndarray:
        idx = np.flatnonzero(np.abs(self.times - t) <= atol)
        if idx.size == 0:
            raise KeyError(f"time {t} not recorded")
        return self.fields[idx[0]]


def _irfft(uh: np.ndarray, shape) -> np.ndarray:
    return np.fft.irfftn(uh, s=shape, axes=tuple(range(len(shape))))


def spectral_derivative(u: np.ndarray, grid: SpectralGrid, order: int, axis: int = 0) -> np.ndarray:
    """d^order u / dx_axis^order via FFT; ``u`` has the grid shape."""
    uh = np.fft.rfftn(u)
    k = grid._k_mesh()[axis]
    return _irfft((1j * k) ** order * uh, grid.shape)


# --------------------------------------------------------------------------
# right-hand sides in Fourier space


def _linear_symbol(problem: PdeProblem, grid: SpectralGrid) -> np.ndarray:
    ks = grid._k_mesh()
    k2 = sum(k * k for k in ks)
    if problem.name == "kdv":
        return 1j * KDV_DISPERSION * ks[0] ** 3  # -(eps) (ik)^3 = i eps k^3
    if problem.name == "burgers":
        return -BURGERS_VISCOSITY * k2 + 0j
    return -AC_DIFFUSION * k2 + 0j


def _nonlinear(problem: PdeProblem, grid: SpectralGrid, advection: bool):
    mask = grid.dealias_mask().astype(np.float64)
    ks = grid._k_mesh()
    shape = grid.shape
    name = problem.name
    if name in ("kdv", "burgers"):
        if not advection:
            return lambda uh, t: np.zeros_like(uh)
        k = ks[0]

        def adv(uh, t):
            u = _irfft(uh, shape)
            return -0.5j * k * mask * np.fft.rfftn(u * u)

        return adv
    if name in ("ac1d_const", "ac1d_tx"):
        variant = name.rsplit("_", 1)[1]
        x = grid.axis(0)
        shift = problem.domain.shift

        def react(uh, t):
            u = _irfft(uh, shape)
            a = ac_coefficient(t, x, shift, variant)
            return -mask * np.fft.rfftn(a * (u**3 - u))

        return react
    if name == "ac2d":

        def react2(uh, t):
            u = _irfft(uh, shape)
            return -mask * np.fft.rfftn(2.0 * (u**3 - u))

        return react2
    raise ConfigError(f"no reference solver for {name!r}")


def stable_dt(problem: PdeProblem, grid: SpectralGrid) -> float:
    """Largest RK4 step that keeps the stiff linear symbol inside the stability region."""
    if problem.name == "kdv":
        return math.inf  # integrated exactly
    lam = np.max(np.abs(_linear_symbol(problem, grid)))
    return RK4_REAL_AXIS_LIMIT / lam if lam > 0 else math.inf


def solve_reference(
    problem: PdeProblem,
    u0: np.ndarray,
    grid: SpectralGrid,
    dt: float,
    record_times: Sequence[float],
    advection: bool = True,
) -> GridSolution:
    """Integrate ``problem`` from ``u0`` (values on ``grid.points``).

    ``advection=False`` switches off the Burgers/KdV quadratic term (used by
    the linear decay check). ``record_times`` must be multiples of ``dt``.
    """
    if dt > stable_dt(problem, grid):
        raise InstabilityError(f"dt={dt} exceeds the RK4 stability bound {stable_dt(problem, grid):.3e}")
    times = np.asarray(sorted(record_times), dtype=np.float64)
    steps = np.rint(times / dt).astype(int)
    if np.any(np.abs(steps * dt - times) > 1e-9 * np.maximum(1.0, times)):
        raise ConfigError("record times must be integer multiples of dt")
    u = np.asarray(u0, dtype=np.float64).reshape(grid.shape)
    uh = np.fft.rfftn(u)
    L = _linear_symbol(problem, grid)
    N = _nonlinear(problem, grid, advection)
    scale0 = max(np.max(np.abs(u)), 1e-12)

    if problem.name == "kdv":
        E = np.exp(0.5 * dt * L)
        E2 = E * E

        def step(uh, t):
            a = dt * N(uh, t)
            b = dt * N(E * (uh + 0.5 * a), t + 0.5 * dt)
            c = dt * N(E * uh + 0.5 * b, t + 0.5 * dt)
            d = dt * N(E2 * uh + E * c, t + dt)
            return E2 * uh + (E2 * a + 2.0 * E * (b + c) + d) / 6.0

    else:

        def F(uh, t):
            return L * uh + N(uh, t)

        def step(uh, t):
            k1 = F(uh, t)
            k2 = F(uh + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = F(uh + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = F(uh + dt * k3, t + dt)
            return uh + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    fields = []
    n = 0
    for target in steps:
        while n < target:
            uh = step(uh, n * dt)
            n += 1
            if n % 100 == 0 or n == target:
                peak = np.max(np.abs(_irfft(uh, grid.shape)))
                if not np.isfinite(peak) or peak > GROWTH_LIMIT * scale0:
                    raise InstabilityError(f"reference solution blew up at t={n * dt:.6g}")
        fields.append(_irfft(uh, grid.shape).ravel())
    return GridSolution(times, np.array(fields).reshape(len(times), -1), grid.points)


def mse(pred, ref, t_index: int) -> float:
    """Mean over samples and grid points of the squared error at ``t_index``.

    ``pred`` and ``ref`` are GridSolutions or equal-length sequences of them.
    """
    if isinstance(pred, GridSolution):
        pred, ref = [pred], [ref]
    if len(pred) != len(ref) or not pred:
        raise ValueError("pred and ref must hold the same nonzero number of samples")
    total = 0.0
    for p, r in zip(pred, ref):
        a, b = p.fields[t_index], r.fields[t_index]
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        total += np.mean((a - b) ** 2)
    return float(total / len(pred))
