# %% [markdown]
# How well does the mean of pairwise gains stand in for a group gain?
#
# For quadratic tasks the gap is bounded by eta (1 + |A|) l^2 / C, with l a
# gradient bound over a ball and C the target's loss floor.  Halving the
# step size should roughly halve the gap.

# %%
import numpy as np

from taskgroup import TrainState, check_observation1, verify_prop1_bound
from taskgroup.sim import random_quadratic_tasks

tasks = random_quadratic_tasks(5, dim=3, seed=3)
rng = np.random.default_rng(3)
state = TrainState(rng.standard_normal(3), [rng.standard_normal(2) for _ in tasks], 1, 0.1)

print(f"{'eta':>10s} {'gap':>12s} {'bound':>12s} {'gap/eta':>10s}")
for k in range(10):
    state.eta = 0.1 / 2**k
    rep = verify_prop1_bound(state, tasks, [0, 1, 2], 4, radius=10.0)
    print(f"{state.eta:10.2e} {rep.lhs:12.3e} {rep.rhs:12.3e} {rep.lhs / state.eta:10.4f}")

# %%
# Gains and post-step losses of the target always rank source sets the same
# way, because both gains share the denominator.
state.eta = 0.05
agree = 0
for _ in range(200):
    A1 = rng.choice(4, size=int(rng.integers(1, 5)), replace=False)
    A2 = rng.choice(4, size=int(rng.integers(1, 5)), replace=False)
    agree += check_observation1(state, tasks, A1, A2, 4).consistent
print(f"ordering agrees in {agree}/200 random comparisons")
