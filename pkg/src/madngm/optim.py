"""Small deterministic optimizers for the auto-decoder losses.

Both optimizers take ``fun(x) -> (loss, grad)`` over a flat float64 vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DivergedError


@dataclass(frozen=True)
class OptimizerConfig:
    """``kind`` is ``"lbfgs"`` or ``"adam"``; unused fields are ignored."""

    kind: str = "lbfgs"
    iterations: int = 100
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    history: int = 10
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("lbfgs", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.history < 1:
            raise ConfigError("L-BFGS history must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")


@dataclass
class OptimizeResult:
    x: np.ndarray
    loss: float
    n_iter: int
    losses: list[float] = field(default_factory=list)
    stopped: str = "max_iter"


def minimize(fun: Callable, x0: np.ndarray, cfg: OptimizerConfig, callback=None) -> OptimizeResult:
    if cfg.kind == "lbfgs":
        return lbfgs(fun, x0, cfg, callback)
    return adam(fun, x0, cfg, callback)


def _two_loop(g, s_hist, y_hist, rho_hist):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for s, y, rho, a in zip(s_hist, y_hist, rho_hist, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(fun: Callable, x0: np.ndarray, cfg: OptimizerConfig, callback=None) -> OptimizeResult:
    """L-BFGS with two-loop recursion and Armijo backtracking.

    An iteration counts only when a step satisfying the sufficient-decrease
    condition is accepted, so the loss sequence is nonincreasing.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not math.isfinite(f):
        raise DivergedError(0)
    losses = [f]
    s_hist, y_hist, rho_hist = [], [], []
    stopped = "max_iter"
    it = 0
    while it < cfg.iterations:
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        if gnorm == 0.0:
            stopped = "zero_gradient"
            break
        d = _two_loop(g, s_hist, y_hist, rho_hist)
        slope = g @ d
        if not slope < 0:
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            d = -g
            slope = g @ d
        step = 1.0 if s_hist else min(1.0, 1.0 / gnorm)
        for _ in range(cfg.max_backtracks + 1):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            if math.isfinite(f_new) and f_new <= f + cfg.c1 * step * slope:
                break
            step *= cfg.shrink
        else:
            if not math.isfinite(f_new):
                raise DivergedError(it + 1)
            stopped = "line_search"
            break
        it += 1
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.history:
                s_hist.pop(0), y_hist.pop(0), rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        losses.append(f)
        if callback is not None:
            callback(it, f)
    return OptimizeResult(x, f, it, losses, stopped)


def adam(fun: Callable, x0: np.ndarray, cfg: OptimizerConfig, callback=None) -> OptimizeResult:
    """Plain Adam. The returned point is the best iterate seen."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f, g = fun(x)
    if not math.isfinite(f):
        raise DivergedError(0)
    best_x, best_f = x.copy(), f
    losses = [f]
    for it in range(1, cfg.iterations + 1):
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**it)
        vhat = v / (1 - cfg.beta2**it)
        x = x - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
        f, g = fun(x)
        if not math.isfinite(f):
            raise DivergedError(it)
        losses.append(f)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if callback is not None:
            callback(it, f)
    return OptimizeResult(best_x, best_f, cfg.iterations, losses)
