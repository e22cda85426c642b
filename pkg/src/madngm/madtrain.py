"""Meta-auto-decoder stage: joint pretraining and latent-only fine-tuning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .neuralnet import Embedding, NetworkArch, _forward_cache, _inputs, as_points, init_params, input_vjp
from .optim import OptimizerConfig, minimize

log = logging.getLogger(__name__)

DEFAULT_SIGMA = 100.0


@dataclass
class TrainingEnsemble:
    """Initial fields sampled on collocation points.

    ``points`` is (N, m, dim): one grid per sample. Samples whose domain is
    a shifted copy of a reference interval carry their own grid and
    embedding; otherwise all grids are identical.
    """

    points: np.ndarray
    values: np.ndarray
    embeddings: list
    ids: list[int]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ConfigError("ensemble needs at least one sample")
        if self.points.shape[:2] != self.values.shape:
            raise ConfigError(f"points {self.points.shape} do not match values {self.values.shape}")
        if len(self.embeddings) != len(self) or len(self.ids) != len(self):
            raise ConfigError("one embedding and id per sample required")

    @classmethod
    def shared(cls, points, values, emb: Embedding, ids: Sequence[int] | None = None):
        values = np.asarray(values, dtype=np.float64)
        pts = as_points(points, emb.dim)
        n = values.shape[0]
        return cls(np.broadcast_to(pts, (n, *pts.shape)).copy(), values, [emb] * n, list(ids or range(n)))

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_colloc(self) -> int:
        return self.values.shape[1]


@dataclass
class Manifold:
    """Pretrained shared weights and per-sample latent codes."""

    arch: NetworkArch
    theta: np.ndarray
    codes: np.ndarray
    sigma: float
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.codes = np.asarray(self.codes, dtype=np.float64)
        if self.theta.shape != (self.arch.n_params,):
            raise ConfigError(f"theta has shape {self.theta.shape}, arch needs ({self.arch.n_params},)")
        if self.codes.ndim != 2:
            raise ConfigError("codes must be a (N, n) array")
        _check_sigma(self.sigma)

    @property
    def latent_dim(self) -> int:
        return self.codes.shape[1]


def _check_sigma(sigma):
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")


def data_loss(arch: NetworkArch, theta, emb: Embedding, z, u0_values, points) -> float:
    """Mean squared misfit between the initial field and the network on ``points``."""
    pts = as_points(points, emb.dim)
    u0 = np.asarray(u0_values, dtype=np.float64).reshape(-1)
    if pts.shape[0] == 0:
        raise ValueError("data_loss needs at least one point")
    if u0.size != pts.shape[0]:
        raise ValueError("u0_values and points are not aligned")
    u, _ = _forward_cache(arch, theta, _inputs(arch, emb, z, pts))
    return float(np.mean((u0 - u) ** 2))


def _features(ensemble: TrainingEnsemble) -> np.ndarray:
    return np.stack([emb.feature_jet(pts, 0, 0)[0] for emb, pts in zip(ensemble.embeddings, ensemble.points)])


def _per_sample_losses(arch, theta, codes, feats, values):
    N, m = values.shape
    zs = np.repeat(codes, m, axis=0)
    inputs = np.concatenate([feats.reshape(N * m, -1), zs], axis=1)
    u, _ = _forward_cache(arch, theta, inputs)
    return np.mean((values - u.reshape(N, m)) ** 2, axis=1)


def pretrain_loss(arch: NetworkArch, theta, codes, ensemble: TrainingEnsemble, sigma: float) -> float:
    """Sum over samples of data loss plus ||z_i||^2 / sigma."""
    _check_sigma(sigma)
    codes = np.asarray(codes, dtype=np.float64)
    if codes.shape[0] != len(ensemble):
        raise ConfigError("one latent code per sample required")
    data = _per_sample_losses(arch, theta, codes, _features(ensemble), ensemble.values)
    return float(data.sum() + np.sum(codes**2) / sigma)


def _loss_and_grad(arch, theta, codes, feats, values, sigma):
    N, m = values.shape
    n = codes.shape[1]
    zs = np.repeat(codes, m, axis=0)
    inputs = np.concatenate([feats.reshape(N * m, -1), zs], axis=1)
    u, _ = _forward_cache(arch, theta, inputs)
    resid = u.reshape(N, m) - values
    loss = float(np.sum(resid**2) / m + np.sum(codes**2) / sigma)
    _, g_theta, g_in = input_vjp(arch, theta, inputs, (2.0 / m) * resid.ravel())
    g_codes = g_in[:, g_in.shape[1] - n :].reshape(N, m, n).sum(axis=1) + (2.0 / sigma) * codes
    return loss, g_theta, g_codes


def pretrain_loss_grad(arch: NetworkArch, theta, codes, ensemble: TrainingEnsemble, sigma: float):
    """Return ``(loss, grad_theta, grad_codes)``."""
    _check_sigma(sigma)
    return _loss_and_grad(arch, np.asarray(theta), np.asarray(codes, float), _features(ensemble), ensemble.values, sigma)


def pretrain(
    ensemble: TrainingEnsemble,
    arch: NetworkArch,
    latent_dim: int,
    sigma: float = DEFAULT_SIGMA,
    opt: OptimizerConfig = OptimizerConfig(),
    callback=None,
) -> Manifold:
    """Jointly fit shared weights and one latent code per sample.

    Weights start from ``init_params(arch, opt.seed)`` and codes from zero.
    """
    _check_sigma(sigma)
    emb_dim = ensemble.embeddings[0].n_features
    if emb_dim + latent_dim != arch.input_dim:
        raise ConfigError(f"arch input_dim {arch.input_dim} != {emb_dim} + latent {latent_dim}")
    feats = _features(ensemble)
    values = ensemble.values
    N, p = len(ensemble), arch.n_params

    def fun(x):
        theta, codes = x[:p], x[p:].reshape(N, latent_dim)
        loss, g_t, g_c = _loss_and_grad(arch, theta, codes, feats, values, sigma)
        return loss, np.concatenate([g_t, g_c.ravel()])

    x0 = np.concatenate([init_params(arch, opt.seed), np.zeros(N * latent_dim)])
    res = minimize(fun, x0, opt, callback)
    log.info("pretrain: %d iterations, loss %.3e (%s)", res.n_iter, res.loss, res.stopped)
    theta, codes = res.x[:p].copy(), res.x[p:].reshape(N, latent_dim).copy()
    return Manifold(arch, theta, codes, sigma, np.asarray(res.losses))


def nearest_sample_index(ensemble: TrainingEnsemble, u_new_values) -> int:
    """Index of the sample closest in discrete L2; ties go to the smallest index."""
    u = np.asarray(u_new_values, dtype=np.float64).reshape(-1)
    if u.size != ensemble.n_colloc:
        raise ValueError("u_new_values is not on the ensemble grid")
    dist = np.sum((ensemble.values - u) ** 2, axis=1)
    return int(np.argmin(dist))


@dataclass
class FinetuneResult:
    z: np.ndarray
    index: int
    warm_loss: float
    loss: float
    warm_data_loss: float
    data_loss: float
    losses: np.ndarray


def finetune(
    manifold: Manifold,
    ensemble: TrainingEnsemble,
    emb: Embedding,
    u_new_values,
    points,
    opt: OptimizerConfig = OptimizerConfig(iterations=100),
    callback=None,
) -> FinetuneResult:
    """Fit a latent code for an unseen initial field with the weights frozen.

    The code is warm-started from the nearest training sample. The returned
    losses include the ``||z||^2 / sigma`` penalty; ``warm_data_loss`` and
    ``data_loss`` exclude it.
    """
    theta = manifold.theta
    u_new = np.asarray(u_new_values, dtype=np.float64).reshape(1, -1)
    pts = as_points(points, emb.dim)
    feats = emb.feature_jet(pts, 0, 0)[0][None]
    idx = nearest_sample_index(ensemble, u_new[0])
    z0 = manifold.codes[idx].copy()
    arch, sigma = manifold.arch, manifold.sigma

    def fun(z):
        loss, _, g = _loss_and_grad(arch, theta, z[None], feats, u_new, sigma)
        return loss, g[0]

    res = minimize(fun, z0, opt, callback)
    warm_data = float(_per_sample_losses(arch, theta, z0[None], feats, u_new)[0])
    final_data = float(_per_sample_losses(arch, theta, res.x[None], feats, u_new)[0])
    log.info("finetune: sample %d warm %.3e -> %.3e", idx, warm_data, final_data)
    return FinetuneResult(res.x.copy(), idx, res.losses[0], res.loss, warm_data, final_data, np.asarray(res.losses))
