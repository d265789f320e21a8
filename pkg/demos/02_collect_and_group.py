# %% [markdown]
# From simulated joint training to task groups.
#
# Six quadratic tasks come in three clusters (task i belongs to cluster
# i % 3).  Gains are measured along one joint training run, then the solver
# splits the tasks and each group is retrained from the common start.

# %%
import numpy as np

from taskgroup import CollectionPolicy, GroupingProblem, collect_run, evaluate_grouping, solve
from taskgroup.sim import aligned_tasks, init_state
from taskgroup.solver import random_feasible_assignment

tasks = aligned_tasks(6, clusters=3, seed=0)
full = collect_run(tasks, CollectionPolicy("full"), steps=100, lr=0.05)
np.set_printoptions(precision=3, suppress=True)
print(full.gains.values)

# %%
# Lazy and sampled collection see the same structure at a fraction of the cost.
lazy = collect_run(tasks, CollectionPolicy("lazy", interval=10), steps=100, lr=0.05)
sampled = collect_run(tasks, CollectionPolicy("sampled", seed=1), steps=100, lr=0.05)
for name, run in (("full", full), ("lazy k=10", lazy), ("sampled", sampled)):
    S = run.gains
    print(f"{name:10s} lookahead evals {run.counter.lookahead_evals:5d}  "
          f"groups {solve(GroupingProblem(S, 3, 'partition')).groups}")

# %%
# Train each group and compare with random groupings, solo and all-in-one training.
start = init_state(tasks, seed=0)
ours = evaluate_grouping(solve(GroupingProblem(full.gains, 3, "partition")), tasks, 100, start)
rng = np.random.default_rng(0)
problem = GroupingProblem(full.gains, 3, "partition")
random_totals = [evaluate_grouping(random_feasible_assignment(problem, rng), tasks, 100, start).total
                 for _ in range(10)]
together = evaluate_grouping([range(6)], tasks, 100, start, compare_solo=False)
print("ours", round(ours.total, 4))
print("random mean", round(float(np.mean(random_totals)), 4))
print("solo", round(ours.solo_total, 4))
print("all together", round(together.total, 4))
