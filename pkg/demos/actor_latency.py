"""
Actor forward latency, KAN against MLP
=======================================

Single-sample forward passes at HalfCheetah sizes on one BLAS thread. The KAN
actor has a tenth of the weights but evaluates a spline basis per input.
"""

from kanppo.harness import cmd_bench

for line in cmd_bench("kan-actor", "mlp-a2c2", "halfcheetah:17:6", steps=1000):
    print(f"{line.arch:<10} {line.actor_params:>5} params  {line.total_seconds:.3f} s / 1000 steps")
