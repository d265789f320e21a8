"""Export of the grouping problem as a pure MILP in LP text format.

The fractional objective ``sum_j X_j^T S X_j / |X_j|`` is linearised with

* ``z_i_k_j = x_i_j * x_k_j`` (pairwise co-membership),
* one-hot group-size indicators ``u_j_s`` with ``sum_i x_i_j = sum_s s u_j_s``,
* ``y_j = sum_s u_j_s / s`` (the reciprocal group size, kept for readability),
* ``w_i_k_j_s = u_j_s * z_i_k_j`` so the objective is ``sum S_ik / s * w_i_k_j_s``,
* ``q_i_a_b = x_i_a * x_i_b`` to state that groups ``a`` and ``b`` differ.

Every product of binaries uses the usual three linking inequalities, so the
model is exact rather than a relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .solver import GroupingProblem

__all__ = ["MipModel", "build_mip", "export_mip"]


@dataclass
class MipModel:
    objective: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)  # (name, {var: coef}, sense, rhs)
    binaries: list = field(default_factory=list)
    continuous: dict = field(default_factory=dict)  # var -> (lo, hi)
    problem: GroupingProblem | None = None

    def add(self, name, coeffs, sense, rhs):
        self.constraints.append((name, dict(coeffs), sense, float(rhs)))

    @property
    def variables(self) -> list:
        return list(self.binaries) + list(self.continuous)

    def lift(self, X) -> dict:
        """Values of every model variable implied by a grouping matrix ``X``."""
        p = self.problem
        X = np.asarray(X, dtype=int)
        n, m = X.shape
        vals = {}
        for i in range(n):
            for j in range(m):
                vals[f"x_{i}_{j}"] = X[i, j]
        for j in range(m):
            size = int(X[:, j].sum())
            for s in _sizes(p, j):
                vals[f"u_{j}_{s}"] = int(s == size)
            vals[f"y_{j}"] = 1.0 / size if size else 0.0
            for i in range(n):
                for k in range(n):
                    z = X[i, j] * X[k, j]
                    vals[f"z_{i}_{k}_{j}"] = z
                    for s in _sizes(p, j):
                        name = f"w_{i}_{k}_{j}_{s}"
                        if name in self.objective:
                            vals[name] = z * int(s == size)
        for a in range(m):
            for b in range(a + 1, m):
                for i in range(n):
                    vals[f"q_{i}_{a}_{b}"] = X[i, a] * X[i, b]
        return vals

    def evaluate(self, vals: dict, tol: float = 1e-9):
        """Objective value and names of violated constraints for ``vals``."""
        obj = sum(c * vals[v] for v, c in self.objective.items())
        bad = []
        for name, coeffs, sense, rhs in self.constraints:
            lhs = sum(c * vals[v] for v, c in coeffs.items())
            if (sense == "<=" and lhs > rhs + tol) or (sense == ">=" and lhs < rhs - tol) or (
                sense == "=" and abs(lhs - rhs) > tol
            ):
                bad.append(name)
        return obj, bad

    def to_lp(self) -> str:
        lines = ["\\ task grouping model, linearised", "Maximize"]
        lines += _expr("obj", self.objective)
        lines.append("Subject To")
        for name, coeffs, sense, rhs in self.constraints:
            body = _expr(name, coeffs)
            body[-1] += f" {sense} {_num(rhs)}"
            lines += body
        lines.append("Bounds")
        for v, (lo, hi) in self.continuous.items():
            lines.append(f" {_num(lo)} <= {v} <= {_num(hi)}")
        lines.append("Binary")
        for k in range(0, len(self.binaries), 8):
            lines.append(" " + " ".join(self.binaries[k:k + 8]))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write_lp(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_lp(), encoding="utf-8", newline="\n")
        return path


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _expr(name, coeffs, per_line=6):
    terms = []
    for v, c in coeffs.items():
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        terms.append(f"{sign} {v}" if mag == 1 else f"{sign} {_num(mag)} {v}")
    if not terms:
        terms = ["+ 0 x_0_0"]
    lines = []
    for k in range(0, len(terms), per_line):
        chunk = " ".join(terms[k:k + per_line])
        lines.append((f" {name}: " if k == 0 else "   ") + chunk)
    return lines


def _sizes(problem: GroupingProblem, j: int) -> range:
    if problem.size_min is None:
        return range(1, problem.n + 1)
    return range(int(problem.size_min[j]), int(problem.size_max[j]) + 1)


def build_mip(problem: GroupingProblem) -> MipModel:
    n, m = problem.n, problem.m
    S = problem.gains.values
    model = MipModel(problem=problem)
    x = lambda i, j: f"x_{i}_{j}"  # noqa: E731
    z = lambda i, k, j: f"z_{i}_{k}_{j}"  # noqa: E731

    model.binaries += [x(i, j) for i in range(n) for j in range(m)]
    model.binaries += [z(i, k, j) for j in range(m) for i in range(n) for k in range(n)]

    for j in range(m):
        sizes = _sizes(problem, j)
        model.binaries += [f"u_{j}_{s}" for s in sizes]
        model.continuous[f"y_{j}"] = (0.0, 1.0)
        for i in range(n):
            for k in range(n):
                if S[i, k] == 0:
                    continue
                for s in sizes:
                    w = f"w_{i}_{k}_{j}_{s}"
                    model.binaries.append(w)
                    model.objective[w] = S[i, k] / s

    for j in range(m):
        model.add(f"nonempty_{j}", {x(i, j): 1 for i in range(n)}, ">=", 1)
    for i in range(n):
        sense = "=" if problem.mode == "partition" else ">="
        model.add(f"cover_{i}", {x(i, j): 1 for j in range(m)}, sense, 1)
    if problem.budget_B is not None:
        for j in range(m):
            coeffs = {x(i, j): problem.budget_B[i, j] for i in range(n) if problem.budget_B[i, j]}
            if coeffs:
                model.add(f"budget_{j}", coeffs, "<=", problem.budget_b[j])
    for j in range(m):
        sizes = _sizes(problem, j)
        coeffs = {x(i, j): 1 for i in range(n)}
        coeffs.update({f"u_{j}_{s}": -s for s in sizes})
        model.add(f"size_{j}", coeffs, "=", 0)
        model.add(f"onesize_{j}", {f"u_{j}_{s}": 1 for s in sizes}, "=", 1)
        coeffs = {f"y_{j}": 1}
        coeffs.update({f"u_{j}_{s}": -1.0 / s for s in sizes})
        model.add(f"recip_{j}", coeffs, "=", 0)
    for j in range(m):
        for i in range(n):
            for k in range(n):
                zz = z(i, k, j)
                model.add(f"zi_{i}_{k}_{j}", {zz: 1, x(i, j): -1}, "<=", 0)
                model.add(f"zk_{i}_{k}_{j}", {zz: 1, x(k, j): -1}, "<=", 0)
                if i == k:
                    model.add(f"zl_{i}_{k}_{j}", {zz: 1, x(i, j): -1}, ">=", 0)
                else:
                    model.add(f"zl_{i}_{k}_{j}", {zz: 1, x(i, j): -1, x(k, j): -1}, ">=", -1)
                for s in _sizes(problem, j):
                    w = f"w_{i}_{k}_{j}_{s}"
                    if w not in model.objective:
                        continue
                    u = f"u_{j}_{s}"
                    model.add(f"wu_{i}_{k}_{j}_{s}", {w: 1, u: -1}, "<=", 0)
                    model.add(f"wz_{i}_{k}_{j}_{s}", {w: 1, zz: -1}, "<=", 0)
                    model.add(f"wl_{i}_{k}_{j}_{s}", {w: 1, u: -1, zz: -1}, ">=", -1)
    for a in range(m):
        for b in range(a + 1, m):
            coeffs = {}
            for i in range(n):
                q = f"q_{i}_{a}_{b}"
                model.binaries.append(q)
                coeffs[x(i, a)] = 1
                coeffs[x(i, b)] = 1
                coeffs[q] = -2
                model.add(f"qa_{i}_{a}_{b}", {q: 1, x(i, a): -1}, "<=", 0)
                model.add(f"qb_{i}_{a}_{b}", {q: 1, x(i, b): -1}, "<=", 0)
                model.add(f"ql_{i}_{a}_{b}", {q: 1, x(i, a): -1, x(i, b): -1}, ">=", -1)
            model.add(f"distinct_{a}_{b}", coeffs, ">=", 1)
    return model


def export_mip(problem: GroupingProblem, path) -> MipModel:
    """Write the linearised model to ``path`` and return it."""
    model = build_mip(problem)
    model.write_lp(path)
    return model
