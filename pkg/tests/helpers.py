"""Shared fixtures data and generators for the test-suite."""

import numpy as np

from taskgroup import GainMatrix, GroupingProblem
from taskgroup.sim import random_quadratic_tasks, random_regression_tasks

H_FD = 1e-5
RTOL_FD = 1e-5

WORKED = [[0.5, 0.4, -0.3], [0.4, 0.5, -0.2], [-0.3, -0.2, 0.5]]


def worked_gains():
    return GainMatrix.from_array(WORKED)


def random_gains(rng, n):
    S = rng.normal(0.0, 0.5, (n, n))
    S[np.diag_indices(n)] = np.abs(S[np.diag_indices(n)]) + 0.2
    return GainMatrix.from_array(np.round(S, 3))


def random_problem(rng, n_max=6, m_max=3):
    """A random small grouping problem, sometimes with budgets or size bounds."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    mode = "cover" if rng.random() < 0.5 else "partition"
    gains = random_gains(rng, n)
    kw = {}
    r = rng.random()
    if r < 0.3:
        B = rng.integers(0, 4, (n, m)).astype(float)
        kw["budget_B"] = B
        kw["budget_b"] = B.sum(axis=0) * rng.uniform(0.4, 0.9)
    elif r < 0.6:
        lo = int(rng.integers(1, 3))
        hi = int(rng.integers(lo, n + 1))
        kw["size_min"] = [lo] * m
        kw["size_max"] = [hi] * m
    return GroupingProblem(gains, m, mode, **kw)


def canonical(masks):
    return tuple(sorted(masks))


def central_diff(f, x, h=H_FD):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0)


def gradient_errors(kind, count, seed=0):
    """Largest relative gap between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        if kind == "quadratic":
            task = random_quadratic_tasks(1, dim=4, seed=int(rng.integers(2**31)), head_dim=3)[0]
        else:
            task = random_regression_tasks(1, dim=4, seed=int(rng.integers(2**31)), head_dim=3)[0]
        phi, theta = rng.standard_normal(4), rng.standard_normal(3)
        fd_phi = central_diff(lambda p: task.loss(p, theta), phi)
        fd_theta = central_diff(lambda t: task.loss(phi, t), theta)
        worst = max(worst, rel_err(task.grad_phi(phi, theta), fd_phi),
                    rel_err(task.grad_theta(phi, theta), fd_theta))
    return worst
