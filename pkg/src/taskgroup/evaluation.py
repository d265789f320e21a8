"""Group-wise training of a grouping and comparison against solo training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sim import LearningRate, TrainState, init_state, train
from .solver import GroupAssignment

__all__ = ["EvaluationReport", "evaluate_grouping"]


@dataclass
class EvaluationReport:
    groups: list
    group_losses: list  # one {task: loss} dict per group
    best_group: dict  # task -> index of its lowest-loss group
    task_losses: np.ndarray
    total: float
    solo_losses: np.ndarray | None = None
    solo_total: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self, names):
        out = {
            "groups": [[names[i] for i in g] for g in self.groups],
            "best_group": {names[i]: j for i, j in sorted(self.best_group.items())},
            "task_losses": {names[i]: float(v) for i, v in enumerate(self.task_losses)},
            "total": self.total,
        }
        if self.solo_losses is not None:
            out["solo_losses"] = {names[i]: float(v) for i, v in enumerate(self.solo_losses)}
            out["solo_total"] = self.solo_total
        return out


def _train_group(group, tasks, start: TrainState, steps, lr, aggregation):
    sub_tasks = [tasks[i] for i in group]
    state = TrainState(start.phi.copy(), [start.thetas[i].copy() for i in group], 1, lr(1))
    state = train(state, sub_tasks, steps, lr, aggregation)
    return {i: t.loss(state.phi, th) for i, t, th in zip(group, sub_tasks, state.thetas)}


def evaluate_grouping(
    groups,
    tasks,
    steps: int = 100,
    state: TrainState | None = None,
    seed: int = 0,
    lr: LearningRate | float = 0.05,
    aggregation: str = "sum",
    compare_solo: bool = True,
) -> EvaluationReport:
    """Train every group from a common initialisation and report per-task losses.

    ``groups`` is a list of task-index collections or a
    :class:`GroupAssignment`.  A task in several groups is credited with its
    lowest final loss (ties go to the lower group index).
    """
    if isinstance(groups, GroupAssignment):
        groups = groups.groups
    groups = [tuple(sorted(int(i) for i in g)) for g in groups]
    if not isinstance(lr, LearningRate):
        lr = LearningRate(float(lr))
    start = init_state(tasks, seed=seed) if state is None else state
    n = len(tasks)

    cache: dict[tuple, dict] = {}

    def run(g):
        if g not in cache:
            cache[g] = _train_group(g, tasks, start, steps, lr, aggregation)
        return cache[g]

    group_losses = [run(g) for g in groups]
    best_group, task_losses = {}, np.full(n, np.inf)
    for j, losses in enumerate(group_losses):
        for i, v in losses.items():
            if v < task_losses[i]:
                task_losses[i], best_group[i] = v, j
    if np.isinf(task_losses).any():
        missing = [i for i in range(n) if np.isinf(task_losses[i])]
        raise ValueError(f"tasks {missing} are in no group")
    report = EvaluationReport(groups, group_losses, best_group, task_losses, float(task_losses.sum()))
    if compare_solo:
        solo = np.array([run((i,))[i] for i in range(n)])
        report.solo_losses, report.solo_total = solo, float(solo.sum())
    return report
