"""
Generalized advantage estimation on a five-step rollout
========================================================

The episode terminates at step 2, so the advantage chain restarts there and
the terminal step does not bootstrap.
"""

import numpy as np

from kanppo.rl_core import RolloutBuffer, compute_gae, normalize_advantages

rewards = np.array([1.0, 0.0, 2.0, 0.5, -1.0])
values = np.array([0.5, 0.4, 1.0, 0.2, 0.1])
terminated = np.array([False, False, True, False, False])
truncated = np.zeros(5, dtype=bool)
buf = RolloutBuffer.from_arrays(rewards, values, terminated, truncated, bootstrap_value=0.3)

for lam in (0.0, 0.95, 1.0):
    adv = compute_gae(buf, gamma=0.99, lam=lam)
    print(f"lam={lam:<4} advantages {np.round(adv.advantages, 4)} returns {np.round(adv.returns, 4)}")

# lam=1 gives Monte-Carlo returns minus the baseline; normalization centers them
print("normalized:", np.round(normalize_advantages(compute_gae(buf, 0.99, 1.0)).advantages, 4))
