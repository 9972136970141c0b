"""
Checking hand-written gradients against finite differences
===========================================================

The full PPO loss (clipped surrogate, value error and entropy bonus) is
differentiated by hand through every architecture. Central differences on
every parameter confirm the analytic gradient.
"""

import numpy as np

from kanppo import ARCHS, NetworkSpec, build_network, finite_diff_check, make_rng
from kanppo.policy import gaussian_log_prob
from kanppo.ppo import Minibatch, PpoConfig, combined_loss

rng = make_rng(0)
cfg = PpoConfig(c1=0.5, c2=0.01)

for arch in ARCHS:
    net = build_network(NetworkSpec(arch, hidden_width=8), 4, 2, seed=1)
    net.params.values[:] += rng.normal(0, 0.05, len(net.params))
    obs = rng.normal(size=(8, 4))
    act = net.mean(obs) + rng.normal(size=(8, 2))
    # old log-probs chosen so ratios sit well inside the trust region
    logp_old = gaussian_log_prob(net.mean(obs), net.log_std, act) - np.log(rng.uniform(0.9, 1.1, 8))
    batch = Minibatch(obs, act, logp_old, rng.normal(size=8), rng.normal(size=8))
    err = finite_diff_check(lambda _: combined_loss(batch, net, cfg).total_loss, net.params)
    print(f"{arch:<10} {len(net.params):>5} params  max relative error {err:.2e}")
