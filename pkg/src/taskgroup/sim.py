"""Synthetic multi-task training with one-step lookahead transfer gains.

Every task has a loss ``L(phi, theta)`` over shared parameters ``phi`` and its
own head ``theta``, with closed-form gradients.  Training is plain gradient
descent: heads follow their own loss and the shared vector follows the
(weighted) sum of all task gradients.  Transfer gains compare the target's
loss after a lookahead update that includes the source task(s) against the
lookahead update made by the target alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, NumericalError, StructuralError
from .gains import GainMatrix, PairAccumulator, StepGainRecord, accumulate, finalize

__all__ = [
    "LOSS_FLOOR",
    "SyntheticTask",
    "QuadraticTask",
    "LinearRegressionTask",
    "TrainState",
    "LearningRate",
    "CollectionPolicy",
    "LookaheadCostCounter",
    "CollectionResult",
    "BelowLossFloor",
    "init_state",
    "task_gradients",
    "step_gradient",
    "lookahead_gain",
    "self_gain",
    "measure_step",
    "collect_run",
    "train",
    "check_observation1",
    "verify_prop1_bound",
    "lipschitz_bound",
    "random_quadratic_tasks",
    "random_regression_tasks",
    "aligned_tasks",
]

LOSS_FLOOR = 1e-12


class BelowLossFloor(DomainError):
    """The lookahead denominator is too close to zero to form a ratio."""


# -- tasks -----------------------------------------------------------------


class SyntheticTask:
    """Common interface of the analytic task family."""

    kind: str = ""
    name: str
    weight: float
    offset: float

    @property
    def shared_dim(self) -> int:
        raise NotImplementedError

    @property
    def head_dim(self) -> int:
        raise NotImplementedError

    def loss(self, phi, theta) -> float:
        raise NotImplementedError

    def grad_phi(self, phi, theta) -> np.ndarray:
        raise NotImplementedError

    def grad_theta(self, phi, theta) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(obj: dict) -> "SyntheticTask":
        kind = obj.get("kind", "quadratic")
        if kind == "quadratic":
            return QuadraticTask(
                obj["name"], obj["H"], obj["center"], obj["head_target"],
                offset=obj.get("offset", 0.0), weight=obj.get("weight", 1.0),
            )
        if kind == "linear-regression":
            return LinearRegressionTask(
                obj["name"], obj["X_shared"], obj["X_head"], obj["y"],
                offset=obj.get("offset", 0.0), weight=obj.get("weight", 1.0),
            )
        raise StructuralError(f"unknown task kind {kind!r}")


class QuadraticTask(SyntheticTask):
    """``0.5 (phi-c)^T H (phi-c) + 0.5 |theta-d|^2 + offset`` with ``H`` PSD."""

    kind = "quadratic"

    def __init__(self, name, H, center, head_target, offset=0.0, weight=1.0):
        self.name = str(name)
        self.H = np.array(H, dtype=np.float64)
        self.center = np.array(center, dtype=np.float64).ravel()
        self.head_target = np.array(head_target, dtype=np.float64).ravel()
        self.offset = float(offset)
        self.weight = float(weight)
        p = self.center.size
        if self.H.shape != (p, p):
            raise StructuralError(f"task {name}: H has shape {self.H.shape}, expected {(p, p)}")
        if not np.allclose(self.H, self.H.T, atol=1e-12):
            raise StructuralError(f"task {name}: H is not symmetric")
        if np.linalg.eigvalsh(self.H).min() < -1e-10:
            raise StructuralError(f"task {name}: H is not positive semidefinite")
        if self.offset < 0:
            raise StructuralError(f"task {name}: offset must be >= 0")
        if self.weight <= 0:
            raise StructuralError(f"task {name}: weight must be > 0")

    @property
    def shared_dim(self):
        return self.center.size

    @property
    def head_dim(self):
        return self.head_target.size

    def loss(self, phi, theta):
        u = phi - self.center
        v = theta - self.head_target
        return float(0.5 * u @ self.H @ u + 0.5 * v @ v + self.offset)

    def grad_phi(self, phi, theta):
        return self.H @ (phi - self.center)

    def grad_theta(self, phi, theta):
        return theta - self.head_target

    def to_dict(self):
        return {
            "kind": self.kind, "name": self.name, "H": self.H.tolist(),
            "center": self.center.tolist(), "head_target": self.head_target.tolist(),
            "offset": self.offset, "weight": self.weight,
        }


class LinearRegressionTask(SyntheticTask):
    """Least squares ``|Xs phi + Xh theta - y|^2 / (2N) + offset``."""

    kind = "linear-regression"

    def __init__(self, name, X_shared, X_head, y, offset=0.0, weight=1.0):
        self.name = str(name)
        self.X_shared = np.array(X_shared, dtype=np.float64)
        self.X_head = np.array(X_head, dtype=np.float64)
        self.y = np.array(y, dtype=np.float64).ravel()
        self.offset = float(offset)
        self.weight = float(weight)
        N = self.y.size
        if self.X_shared.ndim != 2 or self.X_shared.shape[0] != N:
            raise StructuralError(f"task {name}: shared design must have {N} rows")
        if self.X_head.ndim != 2 or self.X_head.shape[0] != N:
            raise StructuralError(f"task {name}: head design must have {N} rows")
        if self.offset < 0 or self.weight <= 0:
            raise StructuralError(f"task {name}: need offset >= 0 and weight > 0")

    @property
    def shared_dim(self):
        return self.X_shared.shape[1]

    @property
    def head_dim(self):
        return self.X_head.shape[1]

    def _residual(self, phi, theta):
        return self.X_shared @ phi + self.X_head @ theta - self.y

    def loss(self, phi, theta):
        r = self._residual(phi, theta)
        return float(0.5 * (r @ r) / self.y.size + self.offset)

    def grad_phi(self, phi, theta):
        return self.X_shared.T @ self._residual(phi, theta) / self.y.size

    def grad_theta(self, phi, theta):
        return self.X_head.T @ self._residual(phi, theta) / self.y.size

    def to_dict(self):
        return {
            "kind": self.kind, "name": self.name, "X_shared": self.X_shared.tolist(),
            "X_head": self.X_head.tolist(), "y": self.y.tolist(),
            "offset": self.offset, "weight": self.weight,
        }


def _check_tasks(tasks: Sequence[SyntheticTask]) -> int:
    if not tasks:
        raise StructuralError("need at least one task")
    p = tasks[0].shared_dim
    if any(t.shared_dim != p for t in tasks):
        raise StructuralError("tasks disagree on the shared dimension")
    return p


# -- training state ----------------------------------------------------------


@dataclass
class TrainState:
    phi: np.ndarray
    thetas: list
    step: int = 1
    eta: float = 0.1

    def __post_init__(self):
        self.phi = np.array(self.phi, dtype=np.float64).ravel()
        self.thetas = [np.array(t, dtype=np.float64).ravel() for t in self.thetas]
        if not self.eta > 0:
            raise StructuralError(f"learning rate must be positive, got {self.eta}")

    def copy(self) -> "TrainState":
        return TrainState(self.phi.copy(), [t.copy() for t in self.thetas], self.step, self.eta)

    def check(self, tasks):
        p = _check_tasks(tasks)
        if self.phi.size != p or len(self.thetas) != len(tasks):
            raise StructuralError("state does not match the task list")
        for t, th in zip(tasks, self.thetas):
            if th.size != t.head_dim:
                raise StructuralError(f"head of task {t.name} has wrong size")


@dataclass(frozen=True)
class LearningRate:
    """Step-size schedule: constant ``eta0`` or ``eta0 / t``."""

    eta0: float = 0.1
    decay: str = "constant"

    def __post_init__(self):
        if not self.eta0 > 0:
            raise StructuralError("eta0 must be positive")
        if self.decay not in ("constant", "inverse"):
            raise StructuralError(f"unknown schedule {self.decay!r}")

    def __call__(self, step: int) -> float:
        if self.decay == "inverse":
            return self.eta0 / step
        return self.eta0


def init_state(tasks, seed=0, scale=1.0, eta=0.1) -> TrainState:
    p = _check_tasks(tasks)
    rng = np.random.default_rng(seed)
    phi = scale * rng.standard_normal(p)
    thetas = [scale * rng.standard_normal(t.head_dim) for t in tasks]
    return TrainState(phi, thetas, 1, eta)


def task_gradients(state: TrainState, tasks):
    """Weighted shared-parameter gradients (rows) and head gradients at ``state``."""
    G = np.array([t.weight * t.grad_phi(state.phi, th) for t, th in zip(tasks, state.thetas)])
    heads = [t.weight * t.grad_theta(state.phi, th) for t, th in zip(tasks, state.thetas)]
    if not np.all(np.isfinite(G)) or not all(np.all(np.isfinite(h)) for h in heads):
        raise NumericalError(f"non-finite gradient at step {state.step}")
    return G, heads


def _combine(G_rows: np.ndarray, aggregation: str) -> np.ndarray:
    if aggregation == "sum":
        return G_rows.sum(axis=0)
    if aggregation == "mean":
        return G_rows.mean(axis=0)
    raise StructuralError(f"unknown aggregation {aggregation!r}")


def step_gradient(state: TrainState, tasks, aggregation: str = "sum") -> TrainState:
    """One joint gradient step; returns a new state."""
    state.check(tasks)
    G, heads = task_gradients(state, tasks)
    phi = state.phi - state.eta * _combine(G, aggregation)
    thetas = [th - state.eta * h for th, h in zip(state.thetas, heads)]
    return TrainState(phi, thetas, state.step + 1, state.eta)


def train(state, tasks, steps, lr=None, aggregation="sum") -> TrainState:
    lr = lr or LearningRate(state.eta)
    for _ in range(steps):
        state = replace(state, eta=lr(state.step))
        state = step_gradient(state, tasks, aggregation)
    return state


# -- lookahead gains ---------------------------------------------------------


@dataclass
class LookaheadCostCounter:
    """Event counts of the gain-collection overhead.

    ``feedforward_evals``/``backward_evals`` count the base loss and gradient
    computations of a collection round, ``lookahead_evals`` the high-order
    loss evaluations at hypothetical parameters and ``param_assignments`` the
    number of candidate parameter sets materialised.  ``rounds`` keeps the
    per-round ``(lookahead_evals, param_assignments)`` increments.
    """

    feedforward_evals: int = 0
    backward_evals: int = 0
    lookahead_evals: int = 0
    param_assignments: int = 0
    rounds: list = field(default_factory=list)

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def to_dict(self) -> dict:
        return {
            "F": self.feedforward_evals + self.lookahead_evals,
            "B": self.backward_evals,
            "C": self.param_assignments,
            "F_base": self.feedforward_evals,
            "F_lookahead": self.lookahead_evals,
            "rounds": self.n_rounds,
        }


def _heads_next(state, tasks, heads):
    return [th - state.eta * h for th, h in zip(state.thetas, heads)]


def _members(A, n, what="source set"):
    idx = sorted(set(int(i) for i in A))
    if not idx:
        raise DomainError(f"{what} must be non-empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise StructuralError(f"{what} has task index out of range")
    return idx


def _lookahead_losses(state, tasks, A, j, aggregation, counter, G=None, heads=None):
    """Target loss after the solo lookahead and after the lookahead with ``A``."""
    state.check(tasks)
    n = len(tasks)
    A = _members(A, n)
    if not 0 <= j < n:
        raise StructuralError(f"target index {j} out of range")
    if j in A:
        raise DomainError("target task must not be part of the source set")
    if G is None:
        G, heads = task_gradients(state, tasks)
    theta_next = state.thetas[j] - state.eta * heads[j]
    phi_solo = state.phi - state.eta * _combine(G[[j]], aggregation)
    phi_group = state.phi - state.eta * _combine(G[A + [j]], aggregation)
    denom = tasks[j].loss(phi_solo, theta_next)
    numer = tasks[j].loss(phi_group, theta_next)
    if counter is not None:
        counter.param_assignments += 2
        counter.lookahead_evals += 2
    return numer, denom


def lookahead_gain(
    state: TrainState, tasks, A, j: int, counter=None, aggregation="sum", floor=LOSS_FLOOR
) -> float:
    """Relative loss improvement of task ``j`` when ``A`` joins its update.

    A singleton ``A = {i}`` gives the pairwise gain from ``i`` to ``j``.
    Raises :class:`BelowLossFloor` when the solo lookahead loss is below
    ``floor``.
    """
    numer, denom = _lookahead_losses(state, tasks, A, j, aggregation, counter)
    if not denom >= floor:
        raise BelowLossFloor(f"denominator {denom:.3g} below floor for target {j}")
    return 1.0 - numer / denom


def self_gain(state: TrainState, tasks, j: int, counter=None, aggregation="sum", floor=LOSS_FLOOR):
    """Improvement of task ``j`` from its own shared step (diagonal entry)."""
    state.check(tasks)
    G, heads = task_gradients(state, tasks)
    theta_next = state.thetas[j] - state.eta * heads[j]
    phi_solo = state.phi - state.eta * _combine(G[[j]], aggregation)
    base = tasks[j].loss(state.phi, theta_next)
    after = tasks[j].loss(phi_solo, theta_next)
    if counter is not None:
        counter.param_assignments += 2
        counter.lookahead_evals += 2
    if not base >= floor:
        raise BelowLossFloor(f"denominator {base:.3g} below floor for self gain of {j}")
    return 1.0 - after / base


def measure_step(
    state: TrainState,
    tasks,
    subset=None,
    self_gain_policy: str = "solo_step",
    aggregation: str = "sum",
    counter: LookaheadCostCounter | None = None,
    floor: float = LOSS_FLOOR,
    G=None,
    heads=None,
) -> StepGainRecord:
    """Measure all ordered pairs inside ``subset`` at the current state.

    Candidate shared vectors are built once each: the solo update of every
    member, the pair update of every unordered pair (shared by both
    directions) and, for the diagonal, the un-updated vector paired with the
    member's next head.
    """
    n = len(tasks)
    subset = list(range(n)) if subset is None else sorted(int(i) for i in subset)
    if self_gain_policy not in ("solo_step", "zero"):
        raise StructuralError(f"unknown self-gain policy {self_gain_policy!r}")
    if G is None:
        G, heads = task_gradients(state, tasks)
    eta = state.eta
    theta_next = {j: state.thetas[j] - eta * heads[j] for j in subset}
    lookahead = 0
    assigned = 0

    solo_loss = {}
    for j in subset:
        phi_solo = state.phi - eta * _combine(G[[j]], aggregation)
        assigned += 1
        solo_loss[j] = tasks[j].loss(phi_solo, theta_next[j])
        lookahead += 1

    gains: dict[tuple[int, int], float] = {}
    skipped: set[tuple[int, int]] = set()
    for a_pos, i in enumerate(subset):
        for j in subset[a_pos + 1:]:
            phi_pair = state.phi - eta * _combine(G[[i, j]], aggregation)
            assigned += 1
            for src, dst in ((i, j), (j, i)):
                loss = tasks[dst].loss(phi_pair, theta_next[dst])
                lookahead += 1
                if solo_loss[dst] >= floor:
                    gains[(src, dst)] = 1.0 - loss / solo_loss[dst]
                else:
                    skipped.add((src, dst))

    if self_gain_policy == "solo_step":
        for j in subset:
            assigned += 1
            base = tasks[j].loss(state.phi, theta_next[j])
            lookahead += 1
            if base >= floor:
                gains[(j, j)] = 1.0 - solo_loss[j] / base
            else:
                skipped.add((j, j))
    else:
        for j in subset:
            gains[(j, j)] = 0.0

    for key, v in gains.items():
        if not math.isfinite(v):
            raise NumericalError(f"non-finite gain for pair {key} at step {state.step}")
    if counter is not None:
        counter.feedforward_evals += n
        counter.backward_evals += n
        counter.lookahead_evals += lookahead
        counter.param_assignments += assigned
        counter.rounds.append((lookahead, assigned))
    return StepGainRecord(state.step, gains, set(gains), skipped)


@dataclass(frozen=True)
class CollectionPolicy:
    """When and where gains are measured.

    ``full`` measures every ordered pair at every step, ``lazy`` every pair
    at steps ``1, k+1, 2k+1, ...`` and ``sampled`` draws a subset size
    uniformly from ``1..n`` and measures the pairs inside a random subset of
    that size (also on the ``interval`` grid).
    """

    mode: str = "full"
    interval: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "sampled", "lazy"):
            raise StructuralError(f"unknown collection mode {self.mode!r}")
        if int(self.interval) < 1:
            raise StructuralError("collection interval must be >= 1")

    def collects_at(self, step: int) -> bool:
        if self.mode == "full":
            return True
        return (step - 1) % self.interval == 0


class CollectionResult(NamedTuple):
    records: list
    gains: GainMatrix
    counter: LookaheadCostCounter
    state: TrainState


def collect_run(
    tasks,
    policy: CollectionPolicy = CollectionPolicy(),
    steps: int = 100,
    lr: LearningRate | float = 0.1,
    state: TrainState | None = None,
    seed: int = 0,
    self_gain_policy: str = "solo_step",
    aggregation: str = "sum",
) -> CollectionResult:
    """Train jointly for ``steps`` steps and accumulate transfer gains."""
    if steps < 1:
        raise StructuralError("steps must be >= 1")
    if not isinstance(lr, LearningRate):
        lr = LearningRate(float(lr))
    n = len(tasks)
    state = init_state(tasks, seed=seed) if state is None else state.copy()
    state.check(tasks)
    rng = np.random.default_rng(policy.seed)
    counter = LookaheadCostCounter()
    acc = PairAccumulator(n)
    records = []
    for _ in range(steps):
        state = replace(state, eta=lr(state.step))
        G, heads = task_gradients(state, tasks)
        if policy.collects_at(state.step):
            subset = None
            if policy.mode == "sampled":
                size = int(rng.integers(1, n + 1))
                subset = sorted(int(i) for i in rng.choice(n, size=size, replace=False))
            rec = measure_step(
                state, tasks, subset, self_gain_policy, aggregation, counter, G=G, heads=heads
            )
            accumulate(acc, rec)
            records.append(rec)
        phi = state.phi - state.eta * _combine(G, aggregation)
        thetas = _heads_next(state, tasks, heads)
        state = TrainState(phi, thetas, state.step + 1, state.eta)
    gains = finalize(acc, [t.name for t in tasks])
    return CollectionResult(records, gains, counter, state)


# -- theory checks -----------------------------------------------------------


@dataclass
class Observation1Report:
    gain1: float
    gain2: float
    loss1: float
    loss2: float
    valid: bool
    consistent: bool


def _sign(x: float, scale: float) -> int:
    # differences within a few ulps of the operands count as ties
    if abs(x) <= 8 * np.finfo(float).eps * scale:
        return 0
    return 1 if x > 0 else -1


def check_observation1(state, tasks, A1, A2, j, aggregation="sum", floor=LOSS_FLOOR):
    """Gain ordering between two source sets versus target-loss ordering."""
    G, heads = task_gradients(state, tasks)
    l1, d = _lookahead_losses(state, tasks, A1, j, aggregation, None, G, heads)
    l2, _ = _lookahead_losses(state, tasks, A2, j, aggregation, None, G, heads)
    if not d >= floor:
        return Observation1Report(math.nan, math.nan, l1, l2, False, True)
    g1, g2 = 1.0 - l1 / d, 1.0 - l2 / d
    sg = _sign(g1 - g2, max(abs(g1), abs(g2), 1.0))
    sl = _sign(l2 - l1, max(abs(l1), abs(l2)))
    return Observation1Report(g1, g2, l1, l2, True, sg == sl)


@dataclass
class Prop1Report:
    lhs: float
    rhs: float
    valid: bool
    holds: bool
    lipschitz: float = math.nan
    floor: float = math.nan
    reason: str = ""


def lipschitz_bound(tasks, radius: float) -> float:
    """Bound on every ``|grad_phi L_k|`` (times the task weight) over the ball."""
    out = 0.0
    for t in tasks:
        if not isinstance(t, QuadraticTask):
            raise StructuralError("Lipschitz bound is only closed-form for quadratic tasks")
        norm = np.linalg.norm(t.H, 2) * (radius + np.linalg.norm(t.center))
        out = max(out, max(t.weight, 1.0) * norm)
    return float(out)


def verify_prop1_bound(state, tasks, A, j, radius: float) -> Prop1Report:
    """Compare the group gain with the mean pairwise gain against the bound.

    The instance is *invalid* (not failed) when its assumptions do not hold:
    non-quadratic tasks, a zero loss floor for the target, or a lookahead
    point leaving the ball of the given radius.
    """
    state.check(tasks)
    A = _members(A, len(tasks))
    if any(not isinstance(t, QuadraticTask) for t in tasks):
        return Prop1Report(math.nan, math.nan, False, True, reason="non-quadratic task")
    C = tasks[j].offset
    if not C > 0:
        return Prop1Report(math.nan, math.nan, False, True, reason="target loss floor C is zero")
    G, heads = task_gradients(state, tasks)
    eta = state.eta
    points = [state.phi, state.phi - eta * G[j], state.phi - eta * G[A + [j]].sum(axis=0)]
    points += [state.phi - eta * (G[i] + G[j]) for i in A]
    if max(np.linalg.norm(p) for p in points) > radius:
        return Prop1Report(math.nan, math.nan, False, True, reason="iterate outside the ball")
    lip = lipschitz_bound(tasks, radius)
    group = lookahead_gain(state, tasks, A, j)
    pairs = [lookahead_gain(state, tasks, [i], j) for i in A]
    lhs = abs(group - sum(pairs) / len(pairs))
    rhs = eta * (1 + len(A)) * lip * lip / C
    return Prop1Report(lhs, rhs, True, lhs <= rhs, lip, C)


# -- generators --------------------------------------------------------------


def _random_spd(rng, dim, low, high):
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = rng.uniform(low, high, dim)
    H = (Q * eig) @ Q.T
    return 0.5 * (H + H.T)


def random_quadratic_tasks(
    n, dim=3, seed=0, head_dim=2, curvature=(0.2, 2.0), offset=(0.1, 1.0), center_scale=1.0
):
    rng = np.random.default_rng(seed)
    tasks = []
    for i in range(n):
        H = _random_spd(rng, dim, *curvature)
        c = center_scale * rng.standard_normal(dim)
        d = rng.standard_normal(head_dim)
        c0 = rng.uniform(*offset)
        tasks.append(QuadraticTask(f"t{i}", H, c, d, offset=c0))
    return tasks


def aligned_tasks(
    n,
    clusters=3,
    dim=4,
    seed=0,
    head_dim=2,
    spread=0.1,
    separation=3.0,
    curvature=(0.5, 1.5),
    offset=(0.05, 0.2),
):
    """Quadratic tasks in clusters whose members share nearly the same minimiser.

    Cluster membership is round-robin (task ``i`` belongs to ``i % clusters``),
    so positive transfer lives inside clusters and negative transfer across.
    """
    rng = np.random.default_rng(seed)
    anchors = separation * rng.standard_normal((clusters, dim))
    tasks = []
    for i in range(n):
        H = _random_spd(rng, dim, *curvature)
        c = anchors[i % clusters] + spread * rng.standard_normal(dim)
        d = rng.standard_normal(head_dim)
        tasks.append(QuadraticTask(f"t{i}", H, c, d, offset=rng.uniform(*offset)))
    return tasks


def random_regression_tasks(n, dim=3, seed=0, head_dim=2, samples=12, offset=(0.1, 1.0)):
    rng = np.random.default_rng(seed)
    tasks = []
    for i in range(n):
        Xs = rng.standard_normal((samples, dim))
        Xh = rng.standard_normal((samples, head_dim))
        y = rng.standard_normal(samples)
        tasks.append(LinearRegressionTask(f"t{i}", Xs, Xh, y, offset=rng.uniform(*offset)))
    return tasks
