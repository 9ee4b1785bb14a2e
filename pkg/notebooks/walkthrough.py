# %% [markdown]
# # Taxi walkthrough
#
# Train the two simulated drivers, pick a bad route, and compare the PPR
# recourse path with the k-change baseline and the exact optimum.
# Run cell by cell in an editor that understands `# %%`, or as a script.

# %%
import numpy as np

from pathrecourse import GridWorld, RewardWeights, TrainConfig
from pathrecourse.baselines import BL1Config, bl1_search, exhaustive_optimal
from pathrecourse.evaluation import policy_kl, ppr_recourse, score_triple, visited_states
from pathrecourse.gridworld import PROFILES, driver_route, generate_bad_paths, simulate_driver_policy

env = GridWorld()
print(env.render())

# %% [markdown]
# Drivers: a DQN per profile, softened into a policy with a softmax over
# legal actions.  The experienced driver is paid for highway cells, the new
# one for local roads.  About 10 s each.

# %%
drivers = {name: simulate_driver_policy(p) for name, p in PROFILES.items()}
for name, pol in drivers.items():
    route = driver_route(pol, env)
    print(name, "highway cells:", env.highway_cells(route))
    print(env.render(route), end="\n\n")

# %% [markdown]
# A bad route: it reaches the destination but skips the money.

# %%
tau0 = generate_bad_paths(10, 0, env)[1]
print(env.render(tau0))
print(score_triple(tau0, tau0, drivers["experienced"], env))

# %% [markdown]
# PPR for each driver, the baseline (at most 3 changed actions, same length)
# and the exact optimum of the same objective by branch and bound.

# %%
w = RewardWeights(0.1, 0.1)
paths = {}
for name, pol in drivers.items():
    path, trace = ppr_recourse(env, tau0, pol, w, TrainConfig(seed=0))
    paths[name] = path
    exact = exhaustive_optimal(env, tau0, pol, weights=w)
    print(name, "iterations", trace.iterations, "converged", trace.converged)
    print("  ppr  ", score_triple(path, tau0, pol, env))
    print("  exact", score_triple(exact, tau0, pol, env))
    print(env.render(path), end="\n\n")

bl1 = bl1_search(env, tau0, BL1Config(3))
print("baseline", score_triple(bl1, tau0, drivers["experienced"], env))
print(env.render(bl1))

# %% [markdown]
# How far apart the two drivers are on the states the recourse paths visit.

# %%
states = visited_states(paths["experienced"], paths["new"])
print("KL(exp || new) =", f"{policy_kl(drivers['experienced'], drivers['new'], states):.6f}")
print("KL(new || exp) =", f"{policy_kl(drivers['new'], drivers['experienced'], states):.6f}")
print("mean max action prob:", np.round([p.table.max(axis=1).mean() for p in drivers.values()], 3))
