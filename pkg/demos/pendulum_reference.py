"""
A hand-written swing-up controller for the pendulum
====================================================

Far from upright the controller pumps energy, u = -0.5 * E * theta_dot, where
E is the energy relative to the upright rest state. Within 0.6 rad of upright a
PD law holds the pole. Its deterministic return over the 100 standard
evaluation episodes is the reference constant used by the acceptance suite.
"""

import math

import numpy as np

from kanppo.envs import make_env
from kanppo.harness import random_baseline
from kanppo.ppo import EVAL_SEED, run_episode


def controller(obs, kp=15.0, kd=4.0, capture=0.6, ke=0.5):
    theta = math.atan2(obs[1], obs[0])
    theta_dot = obs[2] * 8.0
    if abs(theta) < capture:
        u = -(kp * theta + kd * theta_dot)
    else:
        # energy with the same scaling as the dynamics: 0.5 th'^2 + 15 (cos th - 1)
        energy = 0.5 * theta_dot**2 + 15.0 * (obs[0] - 1.0)
        u = -ke * energy * theta_dot
    return np.clip([u], -2.0, 2.0)


env = make_env("pendulum-swingup")
returns = np.array([run_episode(env, controller, EVAL_SEED + i) for i in range(100)])
base, _ = random_baseline("pendulum-swingup")
print(f"reference controller {returns.mean():.2f} (std {returns.std():.2f})")
print(f"random policy        {base:.2f}")
print(f"acceptance bar       {base + 0.5 * (returns.mean() - base):.2f}")
