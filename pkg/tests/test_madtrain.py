import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madngm.errors import ConfigError, DivergedError
from madngm.madtrain import (
    Manifold,
    TrainingEnsemble,
    _features,
    _per_sample_losses,
    data_loss,
    finetune,
    nearest_sample_index,
    pretrain,
    pretrain_loss,
    pretrain_loss_grad,
)
from madngm.neuralnet import Identity, NetworkArch, Periodic1D, evaluate, init_params
from madngm.optim import OptimizerConfig, minimize
from madngm.pdemodels import family_for, make_problem, sample_initial_condition

EMB = Periodic1D(1.0)
GRID = np.linspace(-1, 1, 33)


def kdv_ensemble(n_samples, seed=0, grid=GRID):
    fam = family_for("kdv")
    values = np.array([sample_initial_condition(fam, [seed, i])(grid) for i in range(n_samples)])
    return TrainingEnsemble.shared(grid, values, EMB)


# ---------------------------------------------------------------- optimizers


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_lbfgs_rosenbrock():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerConfig(iterations=200))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)
    assert np.all(np.diff(res.losses) <= 0)
    assert res.n_iter == len(res.losses) - 1


def test_adam_quadratic_returns_best_iterate():
    A = np.diag([1.0, 4.0, 9.0])
    fun = lambda x: (0.5 * x @ A @ x, A @ x)
    res = minimize(fun, np.ones(3), OptimizerConfig(kind="adam", iterations=2000, lr=0.01))
    assert res.loss == min(res.losses)
    assert res.loss < 1e-6


def test_optimizer_divergence_reported():
    def fun(x):
        return (float("nan"), np.zeros_like(x)) if x[0] > 0.5 else (float(-x[0]), -np.ones_like(x))

    with pytest.raises(DivergedError) as info:
        minimize(fun, np.zeros(1), OptimizerConfig(kind="adam", lr=1.0, iterations=10))
    assert info.value.iteration == 1
    with pytest.raises(DivergedError):
        minimize(lambda x: (float("nan"), x), np.zeros(2), OptimizerConfig())


@pytest.mark.parametrize("kw", [{"kind": "sgd"}, {"lr": 0.0}, {"history": 0}, {"iterations": -1}])
def test_optimizer_config_validation(kw):
    with pytest.raises(ConfigError):
        OptimizerConfig(**kw)


# ---------------------------------------------------------------- losses


def test_data_loss_examples():
    arch = NetworkArch(1, (3,))
    zero = np.zeros(arch.n_params)
    emb = Identity(1)
    assert data_loss(arch, zero, emb, [], [0.0, 0.0], [0.1, 0.2]) == 0.0
    assert data_loss(arch, zero, emb, [], [1.0], [0.3]) == 1.0
    assert data_loss(arch, zero, emb, [], [1.0, 3.0], [0.1, 0.9]) == 5.0
    theta = np.random.default_rng(0).standard_normal(arch.n_params)
    xs = np.linspace(0, 1, 5)
    assert data_loss(arch, theta, emb, [], evaluate(arch, theta, emb, [], xs), xs) == 0.0
    with pytest.raises(ValueError):
        data_loss(arch, zero, emb, [], [], np.zeros((0, 1)))


def test_pretrain_loss_examples():
    arch = NetworkArch(2 + 2, (3,))
    zero = np.zeros(arch.n_params)
    ens = TrainingEnsemble.shared(GRID, np.zeros((1, GRID.size)), EMB)
    assert pretrain_loss(arch, zero, np.zeros((1, 2)), ens, 100.0) == 0.0
    assert pretrain_loss(arch, zero, np.ones((1, 2)), ens, 2.0) == 1.0
    codes = np.array([[0.3, -1.2]])
    ens2 = TrainingEnsemble.shared(GRID, np.full((1, GRID.size), 0.5), EMB)
    a, b = pretrain_loss(arch, zero, codes, ens2, 1.0), pretrain_loss(arch, zero, codes, ens2, 2.0)
    reg = np.sum(codes**2)
    assert a - reg == pytest.approx(b - reg / 2, abs=1e-15)
    with pytest.raises(ConfigError):
        pretrain_loss(arch, zero, codes, ens2, 0.0)


def test_pretrain_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for trial in range(5):
        n = int(rng.integers(1, 4))
        arch = NetworkArch(2 + n, tuple(rng.integers(2, 8, size=rng.integers(1, 3))))
        ens = kdv_ensemble(3, seed=trial, grid=np.linspace(-1, 1, 9))
        theta = 0.5 * rng.standard_normal(arch.n_params)
        codes = rng.standard_normal((3, n))
        sigma = 3.0
        _, g_t, g_c = pretrain_loss_grad(arch, theta, codes, ens, sigma)
        x = np.concatenate([theta, codes.ravel()])
        p = arch.n_params
        fd = np.empty_like(x)
        h = 1e-6
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            lp = pretrain_loss(arch, (x + e)[:p], (x + e)[p:].reshape(3, n), ens, sigma)
            lm = pretrain_loss(arch, (x - e)[:p], (x - e)[p:].reshape(3, n), ens, sigma)
            fd[k] = (lp - lm) / (2 * h)
        g = np.concatenate([g_t, g_c.ravel()])
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-5


# ---------------------------------------------------------------- pretrain / finetune


def test_pretrain_zero_field():
    arch = NetworkArch(2 + 3, (10,))
    ens = TrainingEnsemble.shared(GRID, np.zeros((1, GRID.size)), EMB)
    man = pretrain(ens, arch, 3, opt=OptimizerConfig(iterations=200))
    assert _per_sample_losses(arch, man.theta, man.codes, _features(ens), ens.values)[0] <= 1e-8


def test_pretrain_deterministic_and_monotone():
    arch = NetworkArch(2 + 3, (10,))
    ens = kdv_ensemble(4)
    opt = OptimizerConfig(iterations=60, seed=4)
    a, b = pretrain(ens, arch, 3, opt=opt), pretrain(ens, arch, 3, opt=opt)
    assert a.theta.tobytes() == b.theta.tobytes() and a.codes.tobytes() == b.codes.tobytes()
    assert np.all(np.diff(a.losses) <= 0)
    assert a.codes.shape == (4, 3)


def test_pretrain_dimension_check():
    with pytest.raises(ConfigError):
        pretrain(kdv_ensemble(2), NetworkArch(5, (4,)), 2)


def test_nearest_sample_examples():
    grid = np.linspace(0, 1, 5)
    vals = np.array([np.sin(k * grid) for k in range(6)])
    ens = TrainingEnsemble.shared(grid, vals, Identity(1))
    assert nearest_sample_index(ens, vals[3]) == 3
    tie = np.zeros((6, 5))
    tie[1] = 1.0
    tie[4] = -1.0
    tie[[0, 2, 3, 5]] = 5.0
    assert nearest_sample_index(TrainingEnsemble.shared(grid, tie, Identity(1)), np.zeros(5)) == 1
    two = TrainingEnsemble.shared(grid, np.array([np.zeros(5), np.ones(5)]), Identity(1))
    assert nearest_sample_index(two, np.full(5, 0.4)) == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_nearest_sample_permutation_consistent(seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((7, 6))
    u = rng.standard_normal(6)
    perm = rng.permutation(7)
    grid = np.linspace(0, 1, 6)
    i = nearest_sample_index(TrainingEnsemble.shared(grid, vals, Identity(1)), u)
    j = nearest_sample_index(TrainingEnsemble.shared(grid, vals[perm], Identity(1)), u)
    assert perm[j] == i


@pytest.fixture(scope="module")
def small_manifold():
    arch = NetworkArch(2 + 3, (12,))
    ens = kdv_ensemble(6)
    return ens, pretrain(ens, arch, 3, opt=OptimizerConfig(iterations=150))


def test_finetune_leaves_weights_untouched(small_manifold):
    ens, man = small_manifold
    before = man.theta.tobytes(), man.codes.tobytes()
    u_new = sample_initial_condition(family_for("kdv"), [99, 0])(GRID)
    res = finetune(man, ens, EMB, u_new, GRID, OptimizerConfig(iterations=30))
    assert (man.theta.tobytes(), man.codes.tobytes()) == before
    assert res.loss <= res.warm_loss
    assert res.index == nearest_sample_index(ens, u_new)
    assert np.all(np.diff(res.losses) <= 0)


def test_finetune_on_training_sample(small_manifold):
    ens, man = small_manifold
    feats = _features(ens)
    for i in range(len(ens)):
        data = _per_sample_losses(man.arch, man.theta, man.codes, feats, ens.values)[i]
        own = data + np.sum(man.codes[i] ** 2) / man.sigma
        res = finetune(man, ens, EMB, ens.values[i], GRID, OptimizerConfig(iterations=20))
        assert res.index == i
        assert res.loss <= own + 1e-9


def test_finetune_adam(small_manifold):
    ens, man = small_manifold
    u_new = sample_initial_condition(family_for("kdv"), [99, 1])(GRID)
    res = finetune(man, ens, EMB, u_new, GRID, OptimizerConfig(kind="adam", iterations=50, lr=0.01))
    assert res.loss <= res.warm_loss


def test_manifold_validation():
    arch = NetworkArch(2 + 2, (3,))
    with pytest.raises(ConfigError):
        Manifold(arch, np.zeros(arch.n_params + 1), np.zeros((2, 2)), 100.0, np.zeros(0))
    with pytest.raises(ConfigError):
        Manifold(arch, np.zeros(arch.n_params), np.zeros((2, 2)), -1.0, np.zeros(0))


def test_shifted_ensemble_with_per_sample_embeddings():
    values, points, embs = [], [], []
    for i, shift in enumerate((-0.1, 0.0, 0.15)):
        p = make_problem("ac1d_const", shift)
        pts = p.domain.uniform_grid(17)
        points.append(pts)
        values.append(sample_initial_condition(family_for("ac1d_const", shift), i)(pts))
        embs.append(p.embedding)
    ens = TrainingEnsemble(np.array(points), np.array(values), embs, [0, 1, 2])
    arch = NetworkArch(2 + 2, (6,))
    theta = init_params(arch, 0)
    codes = np.random.default_rng(0).standard_normal((3, 2))
    direct = sum(data_loss(arch, theta, e, c, v, p) for e, c, v, p in zip(embs, codes, values, points))
    assert pretrain_loss(arch, theta, codes, ens, 1e300) == pytest.approx(direct, rel=1e-13)
