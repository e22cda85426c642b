"""Neural Galerkin time evolution of the network parameters.

At every time the parameter velocity solves the least-squares problem
``min ||J theta_dot - f||`` where J is the parameter Jacobian of the ansatz on
the quadrature points and f the PDE right-hand side evaluated on the
ansatz's spatial jets. The randomized sparse variant restricts the unknowns
to ``s`` uniformly drawn parameter indices per time step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, DegenerateSystemError, NumericalBlowupError
from .neuralnet import Embedding, NetworkArch, as_points, param_jacobian, spatial_jets
from .pdemodels import PdeProblem

log = logging.getLogger(__name__)

SINGULAR_FLOOR = 1e-14
BLOWUP_LIMIT = 1e8


@dataclass
class GalerkinSystem:
    J: np.ndarray
    rhs: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        if self.J.shape[0] != self.rhs.shape[0] or self.J.shape[0] < 1:
            raise ValueError(f"row mismatch: J {self.J.shape}, rhs {self.rhs.shape}")


@dataclass
class SparseSelector:
    indices: np.ndarray

    @property
    def s(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class EvolutionConfig:
    """Time-stepping setup.

    stepper: ``"euler"`` or ``"rk4"``; update: ``"full"`` or ``"sparse"``
    (with ``sparse_s`` columns per step); quadrature: ``"fixed"`` uniform
    grid or ``"resampled"`` uniform random points drawn every step.
    ``solver`` is ``"svd"`` (truncated, relative threshold ``tau``) or
    ``"ridge"`` (Tikhonov with weight ``ridge``).
    """

    dt: float = 1e-3
    n_steps: int = 1000
    stepper: str = "rk4"
    update: str = "full"
    sparse_s: int = 0
    quadrature: str = "fixed"
    n_points: int = 257
    tau: float = 1e-8
    solver: str = "svd"
    ridge: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be >= 0")
        if self.stepper not in ("euler", "rk4"):
            raise ConfigError(f"unknown stepper {self.stepper!r}")
        if self.update not in ("full", "sparse"):
            raise ConfigError(f"unknown update mode {self.update!r}")
        if self.quadrature not in ("fixed", "resampled"):
            raise ConfigError(f"unknown quadrature {self.quadrature!r}")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if self.solver not in ("svd", "ridge"):
            raise ConfigError(f"unknown least-squares solver {self.solver!r}")
        if self.n_points < 1:
            raise ConfigError("n_points must be >= 1")

    @property
    def final_time(self) -> float:
        return self.dt * self.n_steps

    def validate_for(self, p: int):
        if self.update == "sparse" and not 1 <= self.sparse_s <= p:
            raise ConfigError(f"sparse width s={self.sparse_s} must satisfy 1 <= s <= p={p}")


@dataclass
class Trajectory:
    thetas: list[np.ndarray]
    z: np.ndarray
    times: list[float]
    residuals: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.stack(self.thetas)


# --------------------------------------------------------------------------
# assembly and least squares


def assemble(problem: PdeProblem, arch: NetworkArch, theta, emb: Embedding, z, t: float, points) -> GalerkinSystem:
    pts = as_points(points, emb.dim)
    jet = spatial_jets(arch, theta, emb, z, pts, problem.max_order)
    f = np.asarray(problem.rhs(t, pts, jet), dtype=np.float64)
    bad = ~np.isfinite(f)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise NumericalBlowupError(f"non-finite right-hand side at point {j}", point=j)
    J = param_jacobian(arch, theta, emb, z, pts)
    return GalerkinSystem(J, f, pts)


def lstsq_min_norm(A: np.ndarray, b: np.ndarray, tau: float = 1e-8) -> np.ndarray:
    """Minimum-norm least squares via SVD, dropping singular values below tau * s_max."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] < SINGULAR_FLOOR:
        raise DegenerateSystemError(f"largest singular value {s[0] if s.size else 0.0:.3e} below floor")
    keep = s >= tau * s[0]
    coef = (U[:, keep].T @ b) / s[keep]
    return Vt[keep].T @ coef


def lstsq_ridge(A: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Tikhonov-regularized least squares, solved as an augmented system."""
    p = A.shape[1]
    scale = np.linalg.norm(A, 2)
    if scale < SINGULAR_FLOOR:
        raise DegenerateSystemError("matrix is numerically zero")
    aug = np.vstack([A, math.sqrt(lam) * scale * np.eye(p)])
    rhs = np.concatenate([b, np.zeros(p)])
    return np.linalg.lstsq(aug, rhs, rcond=None)[0]


def _solve(A, b, tau, solver="svd", ridge=1e-10):
    if solver == "ridge":
        return lstsq_ridge(A, b, ridge)
    return lstsq_min_norm(A, b, tau)


def solve_full(system: GalerkinSystem, tau: float = 1e-8, solver: str = "svd", ridge: float = 1e-10) -> np.ndarray:
    return _solve(system.J, system.rhs, tau, solver, ridge)


def draw_selector(p: int, s: int, rng: np.random.Generator) -> SparseSelector:
    """``s`` i.i.d. uniform indices in [0, p) (with replacement).

    Any ``s >= 1`` is a valid draw; the ``s <= p`` limit for time stepping
    is enforced by :meth:`EvolutionConfig.validate_for`.
    """
    if p < 1 or s < 1:
        raise ConfigError(f"selector needs p >= 1 and s >= 1, got p={p}, s={s}")
    return SparseSelector(rng.integers(0, p, size=s))


def solve_sparse(
    system: GalerkinSystem, selector: SparseSelector, tau: float = 1e-8, solver: str = "svd", ridge: float = 1e-10
) -> np.ndarray:
    """Solve in the selected columns and scatter back; duplicates accumulate.

    Columns are gathered in sorted index order. The subspace solution does not
    depend on column order, and sorting makes the rounding independent of it
    too, so any permutation selector reproduces :func:`solve_full` exactly.
    """
    idx = np.sort(np.asarray(selector.indices))
    sub = _solve(system.J[:, idx], system.rhs, tau, solver, ridge)
    out = np.zeros(system.J.shape[1])
    np.add.at(out, idx, sub)
    return out


# --------------------------------------------------------------------------
# time stepping


def step_euler(theta, theta_dot, dt: float) -> np.ndarray:
    return np.asarray(theta) + dt * np.asarray(theta_dot)


def rk4_combine(velocity: Callable, theta, t: float, dt: float) -> np.ndarray:
    """Classical RK4 step of theta' = velocity(theta, t)."""
    k1 = velocity(theta, t)
    k2 = velocity(theta + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = velocity(theta + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = velocity(theta + dt * k3, t + dt)
    return theta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _velocity_fn(problem, arch, emb, z, points, cfg: EvolutionConfig, selector=None, sink=None):
    def velocity(theta, t):
        system = assemble(problem, arch, theta, emb, z, t, points)
        if selector is None:
            v = solve_full(system, cfg.tau, cfg.solver, cfg.ridge)
        else:
            v = solve_sparse(system, selector, cfg.tau, cfg.solver, cfg.ridge)
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > BLOWUP_LIMIT:
            raise NumericalBlowupError(f"parameter velocity exploded at t={t:.6g}")
        if sink is not None:
            sink.append(float(np.linalg.norm(system.J @ v - system.rhs) / math.sqrt(system.J.shape[0])))
        return v

    return velocity


def step_rk4(problem, arch, emb, z, theta, t, dt, cfg: EvolutionConfig, points, selector=None, sink=None):
    """One RK4 step; in sparse mode ``selector`` is shared by all four stages."""
    velocity = _velocity_fn(problem, arch, emb, z, points, cfg, selector, sink)
    return rk4_combine(velocity, np.asarray(theta, dtype=np.float64), t, dt)


def quadrature_points(problem: PdeProblem, cfg: EvolutionConfig, rng: np.random.Generator | None = None):
    if cfg.quadrature == "fixed":
        return problem.domain.uniform_grid(cfg.n_points)
    return problem.domain.sample_uniform(cfg.n_points**problem.dim, rng)


def evolve(
    problem: PdeProblem,
    arch: NetworkArch,
    emb: Embedding,
    theta0,
    z,
    cfg: EvolutionConfig,
    progress: Callable | None = None,
    points=None,
) -> Trajectory:
    """Integrate theta from ``theta0`` over ``cfg.n_steps`` steps.

    Selector indices and resampled quadrature points come from one
    ``np.random.default_rng(cfg.seed)`` stream, so runs are reproducible.
    ``progress(k, t, residual)`` is called after every step. On blow-up a
    ``NumericalBlowupError`` carrying the partial trajectory is raised.
    """
    cfg.validate_for(arch.n_params)
    z = np.array(z, dtype=np.float64)
    z.setflags(write=False)
    theta = np.array(theta0, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    fixed = None
    if cfg.quadrature == "fixed":
        fixed = as_points(points, emb.dim) if points is not None else quadrature_points(problem, cfg)
    traj = Trajectory([theta.copy()], z, [0.0])
    for k in range(1, cfg.n_steps + 1):
        t = (k - 1) * cfg.dt
        pts = fixed if fixed is not None else quadrature_points(problem, cfg, rng)
        selector = draw_selector(arch.n_params, cfg.sparse_s, rng) if cfg.update == "sparse" else None
        sink: list[float] = []
        try:
            if cfg.stepper == "euler":
                v = _velocity_fn(problem, arch, emb, z, pts, cfg, selector, sink)(theta, t)
                theta = step_euler(theta, v, cfg.dt)
            else:
                theta = step_rk4(problem, arch, emb, z, theta, t, cfg.dt, cfg, pts, selector, sink)
        except NumericalBlowupError as exc:
            exc.step = k
            exc.trajectory = traj
            raise
        if not np.all(np.isfinite(theta)):
            raise NumericalBlowupError("non-finite parameters", step=k, trajectory=traj)
        traj.thetas.append(theta.copy())
        traj.times.append(k * cfg.dt)
        traj.residuals.append(sink[0])
        if progress is not None:
            progress(k, k * cfg.dt, sink[0])
    return traj
