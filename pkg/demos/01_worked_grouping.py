# %% [markdown]
# Grouping three tasks from a hand-written gain matrix.
#
# Rows are source tasks, columns targets.  Tasks a and b help each other,
# c is hurt by both.

# %%
import tempfile
from pathlib import Path

import numpy as np

from taskgroup import GainMatrix, GroupingProblem, build_mip, objective, solve, solve_bruteforce

S = GainMatrix(("a", "b", "c"), np.array([[0.5, 0.4, -0.3], [0.4, 0.5, -0.2], [-0.3, -0.2, 0.5]]))
print(S)

# %%
# Objective of a few hand-picked groupings: every group contributes
# (sum of its block of S) / (group size).
for groups in ([(0, 1, 2)], [(0,), (1,), (2,)], [(0, 1), (2,)], [(0, 2), (1,)]):
    print(groups, round(objective(S.values, groups), 6))

# %%
# The exact solver agrees with enumeration in both assignment modes.
for mode in ("cover", "partition"):
    problem = GroupingProblem(S, 2, mode)
    fast, slow = solve(problem), solve_bruteforce(problem)
    print(mode, fast.groups, fast.objective, "| enumeration:", slow.objective, "| nodes:", fast.stats.nodes)

# %%
# Budgets: each task costs 1 and each group may spend 1, so only singletons fit.
problem = GroupingProblem(S, 3, "cover", np.ones((3, 3)), np.ones(3))
print("unit budgets:", solve(problem).groups)

# %%
# The same problem as a linear MILP in LP format, for an external solver.
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "worked.lp"
    model = build_mip(GroupingProblem(S, 2, "partition"))
    model.write_lp(path)
    print(len(model.binaries), "binaries,", len(model.constraints), "constraints")
    print("\n".join(path.read_text().splitlines()[:6]))
