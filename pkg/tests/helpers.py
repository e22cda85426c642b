"""Shared builders and finite-difference oracles for the test suite."""

import numpy as np

from madngm.neuralnet import (
    Identity,
    NetworkArch,
    Periodic1D,
    Periodic2D,
    ShiftedPeriodic1D,
    evaluate,
    init_params,
)


def random_embedding(rng, dim=1):
    if dim == 2:
        return Periodic2D()
    kind = rng.integers(3)
    if kind == 0:
        return Periodic1D(float(rng.uniform(0.5, 1.5)))
    if kind == 1:
        return ShiftedPeriodic1D(float(rng.uniform(-0.2, 0.2)))
    return Identity(1)


def random_instance(rng, dim=1, max_layers=2, max_width=20, max_n=5):
    """(arch, theta, emb, z) with nonzero biases so every code path is exercised."""
    emb = random_embedding(rng, dim)
    n = int(rng.integers(0, max_n + 1))
    hidden = tuple(int(w) for w in rng.integers(1, max_width + 1, size=rng.integers(1, max_layers + 1)))
    arch = NetworkArch(emb.n_features + n, hidden)
    theta = init_params(arch, int(rng.integers(1 << 30))) + 0.3 * rng.standard_normal(arch.n_params)
    z = rng.standard_normal(n)
    return arch, theta, emb, z


def random_points(rng, emb, n):
    if emb.dim == 2:
        return rng.uniform(0.0, 1.0, (n, 2))
    return rng.uniform(-1.0, 1.0, (n, 1))


def fd_jacobian(arch, theta, emb, z, xs, h=1e-5):
    cols = []
    for k in range(arch.n_params):
        e = np.zeros_like(theta)
        e[k] = h
        cols.append((evaluate(arch, theta + e, emb, z, xs) - evaluate(arch, theta - e, emb, z, xs)) / (2 * h))
    return np.stack(cols, axis=1)


def ld_features(emb, xs):
    """Embedding features written out by hand, in extended precision."""
    xs = np.asarray(xs, dtype=np.longdouble)
    pi = np.longdouble(np.pi)
    if isinstance(emb, Periodic1D):
        a = pi * xs[:, 0] / np.longdouble(emb.half_width)
        return np.column_stack([np.sin(a), np.cos(a)])
    if isinstance(emb, ShiftedPeriodic1D):
        d = np.longdouble(emb.shift)
        a = pi * (xs[:, 0] + d) / (1 + 2 * d)
        return np.column_stack([np.sin(a), np.cos(a)])
    if isinstance(emb, Periodic2D):
        a, b = 2 * pi * xs[:, 0], 2 * pi * xs[:, 1]
        return np.column_stack([np.sin(a), np.cos(a), np.sin(b), np.cos(b)])
    return xs.copy()


def ld_evaluate(arch, theta, emb, z, xs):
    """Independent long-double forward pass used as a finite-difference oracle."""
    xs = np.asarray(xs, dtype=np.longdouble)
    h = np.column_stack([ld_features(emb, xs), np.tile(np.asarray(z, np.longdouble), (xs.shape[0], 1))])
    pos = 0
    theta = np.asarray(theta, dtype=np.longdouble)
    widths = arch.widths
    for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
        W = theta[pos : pos + w_in * w_out].reshape(w_out, w_in)
        pos += w_in * w_out
        b = theta[pos : pos + w_out]
        pos += w_out
        h = h @ W.T + b
        if i < len(widths) - 2:
            h = np.tanh(h)
    return h[:, 0]


def fd_derivative(f, xs, axis, order, h=1e-3):
    """Fourth-order central differences of ``f`` along ``axis``."""
    e = np.zeros(xs.shape[1])
    e[axis] = h

    def at(m):
        return f(xs + m * e)

    if order == 1:
        return (-at(2) + 8 * at(1) - 8 * at(-1) + at(-2)) / (12 * h)
    if order == 2:
        return (-at(2) + 16 * at(1) - 30 * at(0) + 16 * at(-1) - at(-2)) / (12 * h**2)
    if order == 3:
        return (-at(3) + 8 * at(2) - 13 * at(1) + 13 * at(-1) - 8 * at(-2) + at(-3)) / (8 * h**3)
    raise ValueError(order)


def rel_err(a, b):
    """Max-norm relative error of a against the oracle b."""
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / scale)


def linear_problem(lam, dim=1):
    """u_t = lam * u; with a bias-plus-linear network the Galerkin ODE is exactly theta' = lam * theta."""
    from madngm.pdemodels import DomainSpec, PdeProblem

    return PdeProblem("linear", DomainSpec(1, ((0.0, 1.0),)), Identity(1), 1.0, 1, lambda t, xs, jet: lam * jet.u)


def random_system(rng, n_pts=None, assembled=True):
    """A least-squares system, either a real network Jacobian with a PDE right-hand side or Gaussian."""
    from madngm.galerkin import GalerkinSystem, assemble
    from madngm.pdemodels import make_problem

    if assembled:
        name = ("kdv", "burgers", "ac1d_tx")[rng.integers(3)]
        problem = make_problem(name)
        emb = problem.embedding
        n = int(rng.integers(0, 4))
        hidden = tuple(int(w) for w in rng.integers(2, 12, size=rng.integers(1, 3)))
        arch = NetworkArch(emb.n_features + n, hidden)
        theta = init_params(arch, int(rng.integers(1 << 30))) + 0.2 * rng.standard_normal(arch.n_params)
        pts = problem.domain.sample_uniform(n_pts or int(rng.integers(5, 60)), rng)
        return assemble(problem, arch, theta, emb, rng.standard_normal(n), 0.3, pts)
    m = n_pts or int(rng.integers(3, 30))
    p = int(rng.integers(2, 30))
    return GalerkinSystem(rng.standard_normal((m, p)), rng.standard_normal(m), np.zeros((m, 1)))


def empirical_mode_variances(n_samples, k_max, seed=0, shift=0.0):
    """Mode-k variance (cos^2 + sin^2 coefficients) estimated from FFTs of sampled fields."""
    from madngm.pdemodels import InitialConditionFamily

    fam = InitialConditionFamily("grf", shift=shift)
    n = 256
    y = np.arange(n) / n
    x = y * (1 + 2 * shift) - shift
    rng = np.random.default_rng(seed)
    coefs = np.empty((n_samples, k_max + 1), complex)
    for i in range(n_samples):
        u = fam.draw(rng)(x)
        coefs[i] = np.fft.rfft(u)[: k_max + 1] / n
    var0 = np.var(coefs[:, 0].real)
    # u = a0 + sum a_k cos + b_k sin  ->  c_k = (a_k - i b_k) / 2
    vark = 4.0 * np.mean(np.abs(coefs[:, 1:]) ** 2, axis=0)
    return np.r_[var0, vark]
