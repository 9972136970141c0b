"""
Training a KAN actor on the point reacher
==========================================

A single-layer KAN actor (6 inputs, 2 actions, 60 spline weights)
learns to steer a damped point mass onto a goal. Pass a step count to train
longer; 100000 steps take about a minute per seed.
"""

import sys

from kanppo.harness import random_baseline
from kanppo.networks import NetworkSpec, build_network
from kanppo.envs import make_env
from kanppo.nn_core import make_rng
from kanppo.ppo import PpoConfig, evaluate_policy, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 30_000
env = make_env("point-reacher")
d = env.descriptor
net = build_network(NetworkSpec("kan-actor"), d.obs_dim, d.act_dim, seed=0,
                    action_low=env.action_low, action_high=env.action_high)
print("actor/critic params:", net.param_counts())

result = train(env, net, PpoConfig(total_steps=steps, lr=1e-3), make_rng(0),
               sink=lambda row: print(f"step {row.env_step:>6}  recent return {row.mean_return:8.1f}  "
                                      f"kl {row.approx_kl:.4f}"))

returns = evaluate_policy(net, make_env("point-reacher"), result.normalizer, episodes=100)
base, _ = random_baseline("point-reacher")
print(f"deterministic return {returns.mean():.1f} vs random {base:.1f}")
