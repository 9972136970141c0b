"""
How many parameters does each actor and critic need?
=====================================================

A KAN edge holds g + k spline coefficients, so a single-layer KAN actor for a
17-dimensional observation and 6 actions has 17 * 6 * 5 = 510 weights, against
5702 for a two-hidden-layer tanh MLP of width 64.
"""

from kanppo import NetworkSpec, count_params
from kanppo.harness import cmd_count_params, format_count_table

print(format_count_table(cmd_count_params(k=2, g=3)))

# finer grids grow KAN actors linearly in g
for g in (3, 5, 10):
    print(f"g={g:<2} kan-actor halfcheetah actor:", count_params(NetworkSpec("kan-actor", g=g), 17, 6)[0])
