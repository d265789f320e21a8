"""Stand-alone feasibility check for grouping matrices.

Deliberately written against plain arrays so that it shares nothing with the
solver it audits.
"""

from __future__ import annotations

import numpy as np

__all__ = ["check_assignment", "check_problem_assignment"]


def check_assignment(
    X,
    mode="cover",
    B=None,
    b=None,
    size_min=None,
    size_max=None,
    tol=1e-9,
) -> list[str]:
    """Return a list of human-readable violations (empty when feasible)."""
    X = np.asarray(X)
    problems = []
    if X.ndim != 2:
        return [f"X must be a matrix, got {X.ndim} dimensions"]
    n, m = X.shape
    if not np.isin(X, (0, 1)).all():
        problems.append("X is not binary")
        return problems
    X = X.astype(int)
    col = X.sum(axis=0)
    row = X.sum(axis=1)
    for j in np.flatnonzero(col < 1):
        problems.append(f"group {j} is empty")
    for i in np.flatnonzero(row < 1):
        problems.append(f"task {i} is not covered")
    if mode == "partition":
        for i in np.flatnonzero(row > 1):
            problems.append(f"task {i} is in {row[i]} groups under partition mode")
    for j1 in range(m):
        for j2 in range(j1 + 1, m):
            if np.sum((X[:, j1] - X[:, j2]) ** 2) < 1:
                problems.append(f"groups {j1} and {j2} are identical")
    if B is not None:
        B = np.asarray(B, dtype=float)
        b = np.asarray(b, dtype=float)
        spent = (B * X).sum(axis=0)
        for j in np.flatnonzero(spent > b + tol):
            problems.append(f"group {j} spends {spent[j]:.6g} > budget {b[j]:.6g}")
    if size_min is not None:
        for j in np.flatnonzero(col < np.asarray(size_min)):
            problems.append(f"group {j} has {col[j]} < {size_min[j]} tasks")
    if size_max is not None:
        for j in np.flatnonzero(col > np.asarray(size_max)):
            problems.append(f"group {j} has {col[j]} > {size_max[j]} tasks")
    return problems


def check_problem_assignment(problem, X) -> list[str]:
    """Unpack a problem-like object's public fields and call :func:`check_assignment`."""
    X = np.asarray(X)
    if X.shape != (problem.n, problem.m):
        return [f"X has shape {X.shape}, expected {(problem.n, problem.m)}"]
    return check_assignment(
        X,
        problem.mode,
        getattr(problem, "budget_B", None),
        getattr(problem, "budget_b", None),
        getattr(problem, "size_min", None),
        getattr(problem, "size_max", None),
    )
