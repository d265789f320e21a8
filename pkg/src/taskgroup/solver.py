"""Exact task grouping: maximise summed size-normalised intra-group gain.

A grouping is an ``n x m`` binary matrix ``X``; column ``j`` is group ``j``.
The objective is ``sum_j (X_j^T S X_j) / |X_j|`` subject to non-empty,
pairwise distinct groups that cover every task (``cover`` mode) or hold every
task exactly once (``partition`` mode), optional per-group budgets
``sum_i B_ij X_ij <= b_j`` and optional size bounds.

Ties between optimal groupings are broken by the lexicographically smallest
tuple of column bitmasks (bit ``i`` set when task ``i`` is in the group).
When all columns carry identical constraints this tuple is sorted.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, SizeGuardError, StructuralError
from .feasibility import check_problem_assignment
from .gains import GainMatrix, group_gain_to_task

__all__ = [
    "GroupingProblem",
    "GroupAssignment",
    "SolverStats",
    "objective",
    "group_value",
    "solve",
    "solve_bruteforce",
    "random_feasible_assignment",
    "masks_to_matrix",
    "matrix_to_masks",
]

_EPS_BUDGET = 1e-9
_EXT_TABLE_MAX_N = 16
_DIVE_NODES = 500


def _as_values(S) -> np.ndarray:
    return S.values if isinstance(S, GainMatrix) else np.asarray(S, dtype=np.float64)


def group_value(S, members: Iterable[int]) -> float:
    """``x^T S x / |x|`` for the indicator ``x`` of ``members`` (order independent)."""
    idx = sorted(set(int(i) for i in members))
    if not idx:
        raise DomainError("groups must be non-empty")
    V = _as_values(S)
    return math.fsum(V[np.ix_(idx, idx)].ravel()) / len(idx)


def objective(S, groups: Sequence[Iterable[int]]) -> float:
    """Grouping objective, summed with ``math.fsum`` so that it is exact up to one rounding."""
    return math.fsum(group_value(S, g) for g in groups)


def masks_to_matrix(masks: Sequence[int], n: int) -> np.ndarray:
    X = np.zeros((n, len(masks)), dtype=np.int64)
    for j, mask in enumerate(masks):
        for i in range(n):
            if mask >> i & 1:
                X[i, j] = 1
    return X


def matrix_to_masks(X) -> tuple[int, ...]:
    X = np.asarray(X)
    return tuple(int(sum(1 << i for i in np.flatnonzero(X[:, j]))) for j in range(X.shape[1]))


def _members(mask: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(n) if mask >> i & 1)


@dataclass(eq=False)
class GroupingProblem:
    gains: GainMatrix
    m: int
    mode: str = "cover"
    budget_B: np.ndarray | None = None
    budget_b: np.ndarray | None = None
    size_min: np.ndarray | None = None
    size_max: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.gains, GainMatrix):
            self.gains = GainMatrix.from_array(self.gains)
        n = self.gains.n
        self.m = int(self.m)
        if self.m < 1:
            raise StructuralError("group count m must be >= 1")
        if self.mode not in ("cover", "partition"):
            raise StructuralError(f"mode must be 'cover' or 'partition', got {self.mode!r}")
        if (self.budget_B is None) != (self.budget_b is None):
            raise StructuralError("budget needs both B and b")
        if self.budget_B is not None:
            self.budget_B = np.array(self.budget_B, dtype=np.float64)
            self.budget_b = np.array(self.budget_b, dtype=np.float64).ravel()
            if self.budget_B.shape != (n, self.m) or self.budget_b.shape != (self.m,):
                raise StructuralError(
                    f"budget shapes {self.budget_B.shape}/{self.budget_b.shape} "
                    f"do not match n={n}, m={self.m}"
                )
            if (self.budget_B < 0).any():
                raise StructuralError("budget matrix must be non-negative")
        if self.size_min is not None or self.size_max is not None:
            lo = np.ones(self.m, int) if self.size_min is None else np.array(self.size_min)
            hi = np.full(self.m, n) if self.size_max is None else np.array(self.size_max)
            lo, hi = lo.astype(np.int64).ravel(), hi.astype(np.int64).ravel()
            if lo.shape != (self.m,) or hi.shape != (self.m,):
                raise StructuralError("size bounds must have one entry per group")
            if (lo < 1).any() or (lo > hi).any() or (hi > n).any():
                raise StructuralError("size bounds must satisfy 1 <= min <= max <= n")
            self.size_min, self.size_max = lo, hi

    @property
    def n(self) -> int:
        return self.gains.n

    def scaled(self, alpha: float) -> "GroupingProblem":
        return GroupingProblem(
            self.gains.scaled(alpha), self.m, self.mode, self.budget_B, self.budget_b,
            self.size_min, self.size_max,
        )

    def permuted(self, perm: Sequence[int]) -> "GroupingProblem":
        perm = list(perm)
        B = None if self.budget_B is None else self.budget_B[perm]
        return GroupingProblem(
            self.gains.permuted(perm), self.m, self.mode, B, self.budget_b,
            self.size_min, self.size_max,
        )

    def column_signature(self, j: int) -> tuple:
        sig = []
        if self.budget_B is not None:
            sig += [tuple(self.budget_B[:, j]), float(self.budget_b[j])]
        if self.size_min is not None:
            sig += [int(self.size_min[j]), int(self.size_max[j])]
        return tuple(sig)

    @property
    def interchangeable(self) -> bool:
        """True when every column has the same constraints."""
        return len({self.column_signature(j) for j in range(self.m)}) == 1

    @classmethod
    def from_dict(cls, obj: dict, gains: GainMatrix) -> "GroupingProblem":
        budget = obj.get("budget") or {}
        sizes = obj.get("size_bounds") or {}
        n, m = gains.n, int(obj["m"])

        def expand(v, default):
            if v is None:
                return None
            return [v] * m if isinstance(v, (int, float)) else v

        lo = expand(sizes.get("min"), 1)
        hi = expand(sizes.get("max"), n)
        return cls(
            gains, m, obj.get("mode", "cover"),
            budget.get("B"), budget.get("b"), lo, hi,
        )

    def to_dict(self) -> dict:
        out = {"m": self.m, "mode": self.mode}
        if self.budget_B is not None:
            out["budget"] = {"B": self.budget_B.tolist(), "b": self.budget_b.tolist()}
        if self.size_min is not None:
            out["size_bounds"] = {"min": self.size_min.tolist(), "max": self.size_max.tolist()}
        return out


@dataclass
class SolverStats:
    nodes: int = 0
    prunings: int = 0
    leaves: int = 0
    wall_time: float = 0.0
    threads: int = 1

    def to_dict(self):
        return {
            "nodes": self.nodes, "prunings": self.prunings, "leaves": self.leaves,
            "wall_time": self.wall_time, "threads": self.threads,
        }


@dataclass
class GroupAssignment:
    feasible: bool
    X: np.ndarray | None = None
    groups: list = field(default_factory=list)
    objective: float | None = None
    per_task_best_group: dict = field(default_factory=dict)
    stats: SolverStats = field(default_factory=SolverStats)
    reason: str = ""

    @property
    def masks(self) -> tuple[int, ...]:
        return () if self.X is None else matrix_to_masks(self.X)

    def to_dict(self, names: Sequence[str], timing: bool = True) -> dict:
        stats = self.stats.to_dict()
        if not timing:
            # keep serialised results byte-identical across runs and thread counts
            stats.pop("wall_time")
            stats.pop("threads")
        out = {
            "feasible": self.feasible,
            "reason": self.reason,
            "objective": self.objective,
            "groups": [[names[i] for i in g] for g in self.groups],
            "per_task_best_group": {names[i]: j for i, j in sorted(self.per_task_best_group.items())},
            "X": None if self.X is None else self.X.tolist(),
            "stats": stats,
        }
        return out


def _best_groups(S: GainMatrix, groups) -> dict:
    best = {}
    for i in range(S.n):
        scores = [(group_gain_to_task(S, g, i), -j) for j, g in enumerate(groups) if i in g]
        if scores:
            best[i] = -max(scores)[1]
    return best


def _make_assignment(problem, masks, stats, reason="") -> GroupAssignment:
    n = problem.n
    groups = [_members(mk, n) for mk in masks]
    X = masks_to_matrix(masks, n)
    return GroupAssignment(
        True, X, groups, objective(problem.gains, groups),
        _best_groups(problem.gains, groups), stats, reason,
    )


def _infeasible(reason, stats) -> GroupAssignment:
    return GroupAssignment(False, None, [], None, {}, stats, reason)


def _quick_infeasibility(problem: GroupingProblem) -> str:
    n, m = problem.n, problem.m
    if m > 2**n - 1:
        return f"{m} distinct non-empty groups do not exist for {n} tasks"
    if problem.mode == "partition" and m > n:
        return f"cannot partition {n} tasks into {m} non-empty groups"
    if problem.size_min is not None:
        if problem.mode == "partition" and problem.size_min.sum() > n:
            return f"minimum sizes sum to {problem.size_min.sum()} > {n} tasks"
        if problem.size_max.sum() < n:
            return f"maximum sizes sum to {problem.size_max.sum()} < {n} tasks"
        if problem.interchangeable:
            s_lo, s_hi = int(problem.size_min[0]), int(problem.size_max[0])
            count = sum(math.comb(n, s) for s in range(s_lo, s_hi + 1))
            if m > count:
                return f"only {count} distinct groups have sizes in [{s_lo}, {s_hi}]"
    return ""


# -- branch and bound ----------------------------------------------------------


class _Search:
    """Depth-first search over tasks; task ``i`` picks the set of groups it joins."""

    def __init__(self, problem: GroupingProblem):
        self.p = problem
        self.n, self.m = problem.n, problem.m
        self.S = problem.gains.values
        self.partition = problem.mode == "partition"
        self.sym = problem.interchangeable
        n, m = self.n, self.m
        self.lo = problem.size_min if problem.size_min is not None else np.ones(m, int)
        self.hi = problem.size_max if problem.size_max is not None else np.full(m, n)
        self.B = problem.budget_B
        self.b = problem.budget_b
        # suffix_max[i, a] = max_{b >= i} S[a, b]
        self.suffix_max = np.full((n + 1, n), -np.inf)
        for i in range(n - 1, -1, -1):
            self.suffix_max[i] = np.maximum(self.suffix_max[i + 1], self.S[:, i])
        if self.partition:
            self.options = [1 << j for j in range(m)]
        else:
            self.options = list(range(1, 2**m))
        self._values: dict[int, float] = {}
        self.stats = SolverStats()
        self.node_limit = None
        self.ext = self._extension_table() if n <= _EXT_TABLE_MAX_N else None

    def _extension_table(self):
        """``ext[i][P]``: best group value reachable from members ``P`` using tasks ``>= i``."""
        n = self.n
        vals = np.array([-np.inf] + [self.value(mk) for mk in range(1, 1 << n)])
        ext = [None] * (n + 1)
        ext[n] = vals
        for i in range(n - 1, -1, -1):
            nxt = ext[i + 1]
            low = np.arange(1 << i)
            ext[i] = np.maximum(nxt[low], nxt[low | (1 << i)])
        return ext

    def fork(self) -> "_Search":
        """Same precomputed tables, fresh statistics (one per subtree)."""
        other = object.__new__(_Search)
        other.__dict__.update(self.__dict__)
        other.stats = SolverStats()
        other.node_limit = None
        return other

    def value(self, mask: int) -> float:
        v = self._values.get(mask)
        if v is None:
            v = self._values[mask] = group_value(self.S, _members(mask, self.n))
        return v

    def key(self, masks) -> tuple:
        return tuple(sorted(masks)) if self.sym else tuple(masks)

    def leaf_ok(self, masks) -> bool:
        sizes = [mk.bit_count() for mk in masks]
        if any(s < lo for s, lo in zip(sizes, self.lo)):
            return False
        if len(set(masks)) != len(masks):
            return False
        if self.sym:
            for j in range(self.m - 1):
                a, c = masks[j], masks[j + 1]
                if (a & -a) == (c & -c) and a > c:
                    return False
        return True

    def offer(self, masks, best) -> None:
        self.stats.leaves += 1
        obj = math.fsum(self.value(mk) for mk in masks)
        key = self.key(masks)
        if best[0] is None or obj > best[0] or (obj == best[0] and key < best[1]):
            best[0], best[1] = obj, key

    def bound(self, i, masks, members, colmax) -> float:
        """Admissible upper bound on any completion of the partial assignment.

        Two relaxations, the smaller wins: each column on its own reaching its
        best superset, and each member scoring at most its largest reachable
        row entry (a group value is a mean of row sums within the group).
        """
        if self.ext is None:
            return self._member_bound(i, members, colmax)
        table = self.ext[i]
        return min(self._member_bound(i, members, colmax), float(sum(table[mk] for mk in masks)))

    def _member_bound(self, i, members, colmax) -> float:
        beta = np.maximum(colmax, self.suffix_max[i][None, :])
        fixed = float(np.where(members, beta, 0.0).sum())
        if i == self.n:
            return fixed
        rest = beta[:, i:]
        if self.partition:
            extra = rest.max(axis=0)
        else:
            pos = np.clip(rest, 0.0, None).sum(axis=0)
            extra = np.where(pos > 0, pos, rest.max(axis=0))
        return fixed + float(extra.sum())

    def children(self, i, state):
        """Feasible child states after placing task ``i``, best-looking first."""
        masks, spent, members, colmax = state
        opened = sum(1 for mk in masks if mk)
        scored = []
        for opt in self.options:
            cols = [j for j in range(self.m) if opt >> j & 1]
            if self.sym:
                fresh = [j for j in cols if not masks[j]]
                if fresh and fresh != list(range(opened, opened + len(fresh))):
                    continue
            ok = True
            for j in cols:
                if masks[j].bit_count() + 1 > self.hi[j]:
                    ok = False
                    break
                if self.B is not None and spent[j] + self.B[i, j] > self.b[j] + _EPS_BUDGET:
                    ok = False
                    break
            if not ok:
                continue
            new_masks = list(masks)
            for j in cols:
                new_masks[j] |= 1 << i
            remaining = self.n - i - 1
            deficits = [max(0, int(self.lo[j]) - new_masks[j].bit_count()) for j in range(self.m)]
            empty = sum(1 for mk in new_masks if not mk)
            if self.partition:
                if sum(deficits) > remaining or empty > remaining:
                    continue
            elif max(deficits) > remaining or (empty and not remaining):
                continue
            score = sum(
                float(self.S[i, members[j]].sum() + self.S[members[j], i].sum()) for j in cols
            )
            scored.append((-score, opt, cols, new_masks))
        scored.sort(key=lambda t: (t[0], t[1]))
        for _, _, cols, new_masks in scored:
            new_spent = spent.copy()
            new_members = members.copy()
            new_colmax = colmax.copy()
            for j in cols:
                if self.B is not None:
                    new_spent[j] += self.B[i, j]
                new_members[j, i] = True
                new_colmax[j] = np.maximum(new_colmax[j], self.S[:, i])
            yield (tuple(new_masks), new_spent, new_members, new_colmax)

    def root(self):
        return (
            tuple([0] * self.m),
            np.zeros(self.m),
            np.zeros((self.m, self.n), dtype=bool),
            np.full((self.m, self.n), -np.inf),
        )

    def dfs(self, i, state, best) -> None:
        self.stats.nodes += 1
        if i == self.n:
            if self.leaf_ok(state[0]):
                self.offer(state[0], best)
            return
        if best[0] is not None:
            cutoff = best[0] - 1e-9 * max(1.0, abs(best[0]))
            if self.ext is not None and sum(self.ext[i][mk] for mk in state[0]) < cutoff:
                self.stats.prunings += 1
                return
            if self._member_bound(i, state[2], state[3]) < cutoff:
                self.stats.prunings += 1
                return
        for child in self.children(i, state):
            if self.node_limit is not None and self.stats.nodes >= self.node_limit:
                return
            self.dfs(i + 1, child, best)

    def greedy(self):
        """Each task joins the single group that raises the objective most."""
        masks = [0] * self.m
        spent = np.zeros(self.m)
        for i in range(self.n):
            opened = sum(1 for mk in masks if mk)
            remaining = self.n - i
            cands = []
            for j in range(self.m):
                if masks[j].bit_count() + 1 > self.hi[j]:
                    continue
                if self.B is not None and spent[j] + self.B[i, j] > self.b[j] + _EPS_BUDGET:
                    continue
                if self.sym and not masks[j] and j != opened:
                    continue
                new = masks[j] | 1 << i
                gain = self.value(new) - (self.value(masks[j]) if masks[j] else 0.0)
                must_open = (self.m - opened) >= remaining and masks[j]
                cands.append((must_open, -gain, j))
            if not cands:
                return None
            _, _, j = min(cands)
            masks[j] |= 1 << i
            if self.B is not None:
                spent[j] += self.B[i, j]
        if any(not mk for mk in masks) or not self.leaf_ok(masks):
            return None
        return masks

    def frontier(self, target: int):
        """Expand the tree breadth-first until there are ``target`` open nodes."""
        nodes = [(0, self.root())]
        while len(nodes) < target:
            depth = nodes[0][0]
            if depth >= self.n - 1 or any(d != depth for d, _ in nodes):
                break
            nxt = []
            for d, st in nodes:
                self.stats.nodes += 1
                nxt.extend((d + 1, ch) for ch in self.children(d, st))
            if not nxt:
                return []
            nodes = nxt
        return nodes


def solve(problem: GroupingProblem, threads: int = 1) -> GroupAssignment:
    """Globally optimal grouping by branch and bound.

    With ``threads > 1`` the top of the tree is split into subtrees searched
    concurrently; the result (objective and matrix) does not depend on the
    thread count.
    """
    t0 = time.perf_counter()
    stats = SolverStats(threads=threads)
    reason = _quick_infeasibility(problem)
    if reason:
        stats.wall_time = time.perf_counter() - t0
        return _infeasible(reason, stats)

    search = _Search(problem)
    seed = [None, None]
    greedy = search.greedy()
    if greedy is not None:
        search.offer(greedy, seed)
    # a short deterministic dive sharpens the incumbent every subtree starts from
    search.node_limit = _DIVE_NODES
    search.dfs(0, search.root(), seed)
    search.node_limit = None

    # fixed split so that node statistics do not depend on the thread count
    nodes = search.frontier(32)

    def run(node):
        sub = search.fork()
        best = list(seed)
        depth, state = node
        sub.dfs(depth, state, best)
        return best, sub.stats

    if threads > 1 and len(nodes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, nodes))
    else:
        results = [run(node) for node in nodes]

    best = list(seed)
    stats.nodes += search.stats.nodes
    stats.leaves += search.stats.leaves
    for (obj, key), sub_stats in results:
        stats.nodes += sub_stats.nodes
        stats.prunings += sub_stats.prunings
        stats.leaves += sub_stats.leaves
        if obj is None:
            continue
        if best[0] is None or obj > best[0] or (obj == best[0] and key < best[1]):
            best = [obj, key]
    stats.wall_time = time.perf_counter() - t0
    if best[0] is None:
        return _infeasible("no assignment satisfies the constraints", stats)
    return _make_assignment(problem, best[1], stats)


# -- enumeration oracle --------------------------------------------------------


def _set_partitions(n: int, m: int):
    """Restricted growth strings of length ``n`` using exactly ``m`` labels."""
    labels = [0] * n

    def rec(i, used):
        if i == n:
            if used == m:
                yield list(labels)
            return
        if m - used > n - i:
            return
        for k in range(min(used + 1, m)):
            labels[i] = k
            yield from rec(i + 1, max(used, k + 1))

    if n >= 1:
        yield from rec(0, 0)


def solve_bruteforce(problem: GroupingProblem) -> GroupAssignment:
    """Enumerate every feasible grouping (small problems only)."""
    n, m = problem.n, problem.m
    limit = 10 if problem.mode == "partition" else 6
    if n > limit:
        raise SizeGuardError(f"enumeration refused for n={n} in {problem.mode} mode (limit {limit})")
    t0 = time.perf_counter()
    stats = SolverStats()
    full = (1 << n) - 1
    if problem.mode == "cover":
        if m > full:
            return _infeasible("not enough distinct groups", stats)
        candidate_sets = (
            c for c in itertools.combinations(range(1, full + 1), m)
            if _union(c) == full
        )
    else:
        if m > n:
            return _infeasible("more groups than tasks", stats)
        candidate_sets = (
            tuple(sorted(sum(1 << i for i in range(n) if lab[i] == k) for k in range(m)))
            for lab in _set_partitions(n, m)
        )

    inter = problem.interchangeable
    orders = [tuple(range(m))] if inter else list(itertools.permutations(range(m)))
    B, b = problem.budget_B, problem.budget_b
    best = None
    cache: dict[int, float] = {}

    def gv(mask):
        if mask not in cache:
            cache[mask] = group_value(problem.gains, _members(mask, n))
        return cache[mask]

    for sset in candidate_sets:
        value = None
        for order in orders:
            masks = tuple(sset[k] for k in order)
            if not _slot_feasible(problem, masks, B, b):
                continue
            stats.leaves += 1
            if value is None:
                value = math.fsum(gv(mk) for mk in sset)
            cand = (value, masks)
            if best is None or value > best[0] or (value == best[0] and masks < best[1]):
                best = cand
    stats.wall_time = time.perf_counter() - t0
    if best is None:
        return _infeasible("no assignment satisfies the constraints", stats)
    return _make_assignment(problem, best[1], stats)


def _union(masks) -> int:
    out = 0
    for mk in masks:
        out |= mk
    return out


def _slot_feasible(problem, masks, B, b) -> bool:
    for j, mk in enumerate(masks):
        size = mk.bit_count()
        if problem.size_min is not None and not problem.size_min[j] <= size <= problem.size_max[j]:
            return False
        if B is not None:
            spent = sum(B[i, j] for i in range(problem.n) if mk >> i & 1)
            if spent > b[j] + _EPS_BUDGET:
                return False
    return True


def random_feasible_assignment(problem: GroupingProblem, rng, max_tries: int = 200_000):
    """Uniform draw over feasible matrices by rejection sampling.

    Partition mode draws a uniform group label per task, cover mode a uniform
    binary matrix; both are uniform over the feasible set once accepted.
    """
    n, m = problem.n, problem.m
    for _ in range(max_tries):
        if problem.mode == "partition":
            X = np.zeros((n, m), dtype=np.int64)
            X[np.arange(n), rng.integers(0, m, size=n)] = 1
        else:
            X = rng.integers(0, 2, size=(n, m))
        if not check_problem_assignment(problem, X):
            masks = matrix_to_masks(X)
            groups = [_members(mk, n) for mk in masks]
            return GroupAssignment(
                True, X, groups, objective(problem.gains, groups),
                _best_groups(problem.gains, groups), SolverStats(), "random",
            )
    raise DomainError(f"no feasible random grouping found in {max_tries} draws")
