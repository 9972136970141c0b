"""Kolmogorov-Arnold networks as actor/critic approximators in a numpy PPO trainer."""

from .nn_core import AdamState, ParamStore, adam_step, finite_diff_check, make_rng, zero_grads
from .spline import KnotGrid, basis_derivatives, basis_values, eval_spline
from .networks import (
    ARCHS,
    ActorCritic,
    KanLayer,
    MlpLayer,
    NetworkSpec,
    PruneMask,
    build_network,
    count_params,
    prune,
)

__version__ = "0.1.0"

__all__ = [
    "ARCHS",
    "ActorCritic",
    "AdamState",
    "KanLayer",
    "KnotGrid",
    "MlpLayer",
    "NetworkSpec",
    "ParamStore",
    "PruneMask",
    "adam_step",
    "basis_derivatives",
    "basis_values",
    "build_network",
    "count_params",
    "eval_spline",
    "finite_diff_check",
    "make_rng",
    "prune",
    "zero_grads",
]
