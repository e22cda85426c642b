import math

import numpy as np
import pytest

import madngm.galerkin as G
from helpers import linear_problem, random_system
from madngm.errors import ConfigError, DegenerateSystemError, NumericalBlowupError
from madngm.galerkin import (
    EvolutionConfig,
    GalerkinSystem,
    SparseSelector,
    assemble,
    draw_selector,
    evolve,
    rk4_combine,
    solve_full,
    solve_sparse,
    step_euler,
    step_rk4,
)
from madngm.neuralnet import Identity, NetworkArch, evaluate, init_params
from madngm.pdemodels import DomainSpec, PdeProblem, make_problem

# chi-square critical value, 9 degrees of freedom, upper tail 0.001
CHI2_9_999 = 27.877


def system(J, f):
    J = np.atleast_2d(np.asarray(J, float))
    return GalerkinSystem(J, np.asarray(f, float), np.zeros((J.shape[0], 1)))


# ---------------------------------------------------------------- assembly


def test_assemble_zero_network_ac_equilibrium():
    problem = make_problem("ac1d_const", 0.1)
    arch = NetworkArch(2 + 2, (5,))
    sysm = assemble(problem, arch, np.zeros(arch.n_params), problem.embedding, np.ones(2), 0.0, problem.domain.uniform_grid(9))
    assert np.all(sysm.rhs == 0.0)


def test_assemble_single_point_matches_fd_slope():
    problem = linear_problem(1.0)
    arch = NetworkArch(1, ())
    theta = np.array([0.7, -0.2])
    sysm = assemble(problem, arch, theta, Identity(1), np.zeros(0), 0.0, [0.4])
    assert sysm.J.shape == (1, 2)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        slope = (evaluate(arch, theta + e, Identity(1), [], [0.4]) - evaluate(arch, theta - e, Identity(1), [], [0.4])) / (2 * h)
        assert sysm.J[0, k] == pytest.approx(slope[0], abs=1e-9)


def test_assemble_duplicate_points_duplicate_rows():
    problem = make_problem("kdv")
    arch = NetworkArch(2 + 1, (6,))
    theta = init_params(arch, 1)
    sysm = assemble(problem, arch, theta, problem.embedding, [0.3], 0.0, [0.25, 0.25])
    assert sysm.J[0].tobytes() == sysm.J[1].tobytes() and sysm.rhs[0] == sysm.rhs[1]


def test_assemble_nonfinite_rhs_names_point():
    def rhs(t, xs, jet):
        out = np.zeros(xs.shape[0])
        out[2] = np.nan
        return out

    problem = PdeProblem("bad", DomainSpec(1, ((0.0, 1.0),)), Identity(1), 1.0, 1, rhs)
    arch = NetworkArch(1, (3,))
    with pytest.raises(NumericalBlowupError) as info:
        assemble(problem, arch, init_params(arch, 0), Identity(1), [], 0.0, np.linspace(0, 1, 5))
    assert info.value.point == 2


# ---------------------------------------------------------------- least squares


def test_solve_full_examples():
    f = np.array([1.5, -2.0, 0.25])
    np.testing.assert_allclose(solve_full(system(np.eye(3), f)), f, atol=1e-15)
    assert solve_full(system([[1.0], [1.0]], [1.0, 3.0]))[0] == pytest.approx(2.0, abs=1e-15)
    rng = np.random.default_rng(0)
    assert np.all(solve_full(system(rng.standard_normal((4, 6)), np.zeros(4))) == 0.0)


def test_solve_full_degenerate():
    with pytest.raises(DegenerateSystemError):
        solve_full(system(np.zeros((3, 2)), [1.0, 2.0, 3.0]))
    with pytest.raises(DegenerateSystemError):
        solve_full(system(np.full((2, 2), 1e-16), [1.0, 2.0]), solver="ridge")


def test_solve_full_minimum_norm():
    # underdetermined: the minimum-norm solution lies in the row space
    J = np.array([[1.0, 1.0, 0.0]])
    v = solve_full(system(J, [2.0]))
    np.testing.assert_allclose(v, [1.0, 1.0, 0.0], atol=1e-15)


def test_ridge_close_to_svd_on_well_conditioned():
    rng = np.random.default_rng(1)
    sysm = system(rng.standard_normal((20, 5)), rng.standard_normal(20))
    np.testing.assert_allclose(solve_full(sysm, solver="ridge", ridge=1e-14), solve_full(sysm), atol=1e-9)


def test_galerkin_orthogonality():
    rng = np.random.default_rng(11)
    for i in range(50):
        s = random_system(rng, assembled=i % 2 == 0)
        v = solve_full(s)
        r = s.J.T @ (s.J @ v - s.rhs)
        assert np.max(np.abs(r)) <= 1e-8 * (1 + np.max(np.abs(s.J.T @ s.rhs)))


# ---------------------------------------------------------------- sparse update


def test_selector_examples():
    rng = np.random.default_rng(0)
    assert np.all(draw_selector(1, 7, rng).indices == 0)
    a = draw_selector(50, 10, np.random.default_rng(5)).indices
    b = draw_selector(50, 10, np.random.default_rng(5)).indices
    assert np.array_equal(a, b)
    with pytest.raises(ConfigError):
        draw_selector(50, 0, rng)
    with pytest.raises(ConfigError):
        G.EvolutionConfig(update="sparse", sparse_s=51).validate_for(50)


def test_selector_chi_square_uniform():
    idx = draw_selector(10, 100_000, np.random.default_rng(2024)).indices
    counts = np.bincount(idx, minlength=10)
    expected = idx.size / 10
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert chi2 < CHI2_9_999


def test_sparse_identity_and_permutation():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = random_system(rng)
        p = s.J.shape[1]
        full = solve_full(s)
        np.testing.assert_allclose(solve_sparse(s, SparseSelector(np.arange(p))), full, atol=1e-10)
        np.testing.assert_allclose(solve_sparse(s, SparseSelector(rng.permutation(p))), full, atol=1e-10)


def test_sparse_single_column_closed_form():
    rng = np.random.default_rng(4)
    s = random_system(rng, assembled=False)
    i = 3 % s.J.shape[1]
    v = solve_sparse(s, SparseSelector(np.array([i])))
    col = s.J[:, i]
    want = np.zeros(s.J.shape[1])
    want[i] = col @ s.rhs / (col @ col)
    np.testing.assert_allclose(v, want, rtol=1e-12, atol=1e-15)


def test_sparse_duplicates_accumulate():
    J = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    f = np.array([1.0, 2.0, 3.0])
    v = solve_sparse(system(J, f), SparseSelector(np.array([0, 0])))
    # duplicated column: minimum-norm split of the single-column solution
    assert v[1] == 0.0
    assert v[0] == pytest.approx((J[:, 0] @ f) / (J[:, 0] @ J[:, 0]), abs=1e-14)


def test_sparse_support_orthogonality_and_dominance():
    rng = np.random.default_rng(5)
    for k in range(200):
        s = random_system(rng, assembled=k % 2 == 0)
        p = s.J.shape[1]
        sel = draw_selector(p, int(rng.integers(1, p + 1)), rng)
        v = solve_sparse(s, sel)
        outside = np.setdiff1d(np.arange(p), sel.indices)
        assert np.all(v[outside] == 0.0)
        Js = s.J[:, sel.indices]
        res_sparse = s.J @ v - s.rhs
        r = Js.T @ res_sparse
        assert np.max(np.abs(r)) <= 1e-8 * (1 + np.max(np.abs(Js.T @ s.rhs)))
        r_full = np.linalg.norm(s.J @ solve_full(s) - s.rhs)
        assert np.linalg.norm(res_sparse) >= r_full - truncation_slack(s) - 1e-10


def truncation_slack(s, tau=1e-8):
    """Norm of the part of f the truncated full solve discards; zero when nothing is truncated."""
    U, sv, _ = np.linalg.svd(s.J, full_matrices=False)
    dropped = U[:, sv < tau * sv[0]]
    return float(np.linalg.norm(dropped.T @ s.rhs))


def test_sparse_residual_dominance_full_rank():
    rng = np.random.default_rng(6)
    for _ in range(200):
        s = random_system(rng, assembled=False)
        assert truncation_slack(s) == 0.0
        p = s.J.shape[1]
        v = solve_sparse(s, draw_selector(p, int(rng.integers(1, p + 1)), rng))
        r_full = np.linalg.norm(s.J @ solve_full(s) - s.rhs)
        assert np.linalg.norm(s.J @ v - s.rhs) >= r_full - 1e-10


# ---------------------------------------------------------------- steppers


def test_step_euler():
    theta = np.array([1.0, 2.0])
    assert np.array_equal(step_euler(theta, np.zeros(2), 0.1), theta)
    np.testing.assert_allclose(step_euler(theta, [10.0, -10.0], 0.1), [2.0, 1.0], atol=1e-15)
    assert np.array_equal(step_euler(theta, [5.0, 5.0], 0.0), theta)


def linear_rk4_step(lam, theta, dt):
    problem = linear_problem(lam)
    arch = NetworkArch(1, ())
    cfg = EvolutionConfig(dt=dt, n_steps=1, n_points=9)
    return step_rk4(problem, arch, Identity(1), np.zeros(0), theta, 0.0, dt, cfg, problem.domain.uniform_grid(9))


def test_rk4_taylor_polynomial():
    theta = np.array([0.8, -0.3])
    for lam, dt in ((-1.3, 0.1), (2.0, 0.05), (0.7, 0.3)):
        x = lam * dt
        taylor = 1 + x + x**2 / 2 + x**3 / 6 + x**4 / 24
        np.testing.assert_allclose(linear_rk4_step(lam, theta, dt), taylor * theta, rtol=0, atol=1e-14)


def test_rk4_observed_order():
    lam, T = -1.0, 1.0
    errs = []
    for n in (5, 10, 20):
        dt = T / n
        th = 1.0
        th = np.array([th])
        for k in range(n):
            th = rk4_combine(lambda y, t: lam * y, th, k * dt, dt)
        errs.append(abs(th[0] - math.exp(lam * T)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5)


def test_rk4_zero_rhs_keeps_theta():
    problem = linear_problem(0.0)
    arch = NetworkArch(1, (3,))
    theta = init_params(arch, 2)
    cfg = EvolutionConfig(dt=0.1, n_steps=1, n_points=5)
    out = step_rk4(problem, arch, Identity(1), [], theta, 0.0, 0.1, cfg, problem.domain.uniform_grid(5))
    assert np.array_equal(out, theta)


# ---------------------------------------------------------------- evolve


def equilibrium_theta(arch, value=1.0):
    theta = np.zeros(arch.n_params)
    theta[arch.blocks()[-1][1]] = value
    return theta


def test_evolve_zero_steps():
    problem = make_problem("kdv")
    arch = NetworkArch(2 + 2, (4,))
    theta = init_params(arch, 0)
    traj = evolve(problem, arch, problem.embedding, theta, [0.1, 0.2], EvolutionConfig(n_steps=0, n_points=17))
    assert len(traj) == 1 and traj.times == [0.0]
    assert np.array_equal(traj.thetas[0], theta)


@pytest.mark.parametrize("stepper", ["euler", "rk4"])
def test_evolve_preserves_ac_equilibrium(stepper):
    problem = make_problem("ac1d_tx", 0.1)
    arch = NetworkArch(2 + 2, (6,))
    theta0 = equilibrium_theta(arch)
    z = np.array([0.3, -0.4])
    cfg = EvolutionConfig(dt=1e-3, n_steps=100, stepper=stepper, n_points=33)
    traj = evolve(problem, arch, problem.embedding, theta0, z, cfg)
    grid = problem.domain.uniform_grid(65)
    base = evaluate(arch, theta0, problem.embedding, z, grid)
    worst = max(np.max(np.abs(evaluate(arch, th, problem.embedding, z, grid) - base)) for th in traj.thetas)
    assert worst <= 1e-6


def ac_setup(seed=0):
    problem = make_problem("ac1d_tx", 0.05)
    arch = NetworkArch(2 + 2, (6,))
    theta = init_params(arch, seed) + 0.1 * np.random.default_rng(seed).standard_normal(arch.n_params)
    return problem, arch, theta, np.array([0.2, -0.1])


def test_sparse_with_full_selector_equals_full(monkeypatch):
    problem, arch, theta, z = ac_setup()
    base = dict(dt=1e-3, n_steps=10, n_points=33, stepper="rk4")
    full = evolve(problem, arch, problem.embedding, theta, z, EvolutionConfig(**base))
    monkeypatch.setattr(G, "draw_selector", lambda p, s, rng: SparseSelector(np.arange(p)))
    sparse = evolve(problem, arch, problem.embedding, theta, z, EvolutionConfig(update="sparse", sparse_s=arch.n_params, **base))
    for a, b in zip(full.thetas, sparse.thetas):
        np.testing.assert_allclose(a, b, atol=1e-8, rtol=0)


@pytest.mark.parametrize("kw", [{}, {"update": "sparse", "sparse_s": 10}, {"quadrature": "resampled"}])
def test_evolve_reproducible_and_z_constant(kw):
    problem, arch, theta, z = ac_setup(1)
    cfg = EvolutionConfig(dt=1e-3, n_steps=5, n_points=33, seed=7, **kw)
    a = evolve(problem, arch, problem.embedding, theta, z, cfg)
    b = evolve(problem, arch, problem.embedding, theta, z, cfg)
    assert a.as_array().tobytes() == b.as_array().tobytes()
    assert a.z.tobytes() == z.tobytes() and not a.z.flags.writeable
    assert len(a.thetas) == len(a.times) == 6 and len(a.residuals) == 5


def test_sparse_update_stays_in_selected_subspace(monkeypatch):
    problem, arch, theta, z = ac_setup(2)
    chosen = []

    def fake(p, s, rng):
        sel = SparseSelector(rng.integers(0, p, size=s))
        chosen.append(sel.indices)
        return sel

    monkeypatch.setattr(G, "draw_selector", fake)
    cfg = EvolutionConfig(dt=1e-3, n_steps=3, n_points=33, update="sparse", sparse_s=8, stepper="rk4")
    traj = evolve(problem, arch, problem.embedding, theta, z, cfg)
    for k, idx in enumerate(chosen):
        moved = np.flatnonzero(traj.thetas[k + 1] != traj.thetas[k])
        assert set(moved) <= set(idx.tolist())


def test_evolve_blowup_reports_step_and_partial():
    def rhs(t, xs, jet):
        return np.full(xs.shape[0], 1e6 * 10.0**t)

    problem = PdeProblem("grow", DomainSpec(1, ((0.0, 1.0),)), Identity(1), 10.0, 1, rhs)
    arch = NetworkArch(1, ())
    cfg = EvolutionConfig(dt=1.0, n_steps=10, stepper="euler", n_points=5)
    with pytest.raises(NumericalBlowupError) as info:
        evolve(problem, arch, Identity(1), np.zeros(2), [], cfg)
    assert info.value.step == 4
    assert len(info.value.trajectory.thetas) == 4


def test_evolve_sparse_width_validated_before_compute():
    problem, arch, theta, z = ac_setup()
    with pytest.raises(ConfigError):
        evolve(problem, arch, problem.embedding, theta, z, EvolutionConfig(update="sparse", sparse_s=arch.n_params + 1))


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"tau": 1.0}, {"stepper": "rk2"}, {"n_steps": -1}, {"solver": "qr"}])
def test_evolution_config_validation(kw):
    with pytest.raises(ConfigError):
        EvolutionConfig(**kw)
