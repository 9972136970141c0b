"""Diagonal Gaussian policy with a state-independent log standard deviation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .networks import ActorCritic
from .nn_core import NonFiniteError

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


@dataclass
class ActionSample:
    action: np.ndarray  # pre-clamp
    clamped_action: np.ndarray
    log_prob: float


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Log-density summed over the last axis."""
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-HALF_LOG_2PI - log_std - 0.5 * z * z, axis=-1)


def gaussian_log_prob_grads(mean, log_std, action, dlogp):
    """Backprop ``dlogp`` (one weight per sample) to (dmean, dlog_std)."""
    inv_std = np.exp(-log_std)
    z = (action - mean) * inv_std
    w = np.asarray(dlogp)[..., None]
    dmean = w * z * inv_std
    dlog_std = np.sum(w * (z * z - 1.0), axis=tuple(range(np.ndim(dmean) - 1)))
    return dmean, dlog_std


def sample_action(net: ActorCritic, obs, rng: np.random.Generator) -> ActionSample:
    mean = net.mean(obs)
    if not np.all(np.isfinite(mean)):
        raise NonFiniteError(f"{net.spec.arch} actor produced a non-finite action mean")
    z = rng.standard_normal(net.act_dim)
    action = mean + np.exp(net.log_std) * z
    logp = float(np.sum(-HALF_LOG_2PI - net.log_std - 0.5 * z * z))
    return ActionSample(action, net.clamp_action(action), logp)


def log_prob(net: ActorCritic, obs, action):
    lp = gaussian_log_prob(net.mean(obs), net.log_std, np.asarray(action, dtype=np.float64))
    return float(lp) if np.ndim(lp) == 0 else lp


def log_prob_backward(net: ActorCritic, obs, action, dlogp=1.0) -> np.ndarray:
    """Log-probabilities of a batch, accumulating ``sum(dlogp * logp)`` grads
    into the actor and log_std."""
    obs = np.atleast_2d(obs)
    action = np.atleast_2d(action)
    mean, caches = net.actor.forward(obs)
    lp = gaussian_log_prob(mean, net.log_std, action)
    dlogp = np.broadcast_to(np.asarray(dlogp, dtype=np.float64), lp.shape)
    dmean, dls = gaussian_log_prob_grads(mean, net.log_std, action, dlogp)
    net.actor.backward(caches, dmean)
    net.dlog_std += dls
    return lp


def entropy(net: ActorCritic) -> float:
    return float(np.sum(0.5 * np.log(2.0 * np.pi * np.e) + net.log_std))


def deterministic_action(net: ActorCritic, obs) -> np.ndarray:
    mean = net.mean(obs)
    if not np.all(np.isfinite(mean)):
        raise NonFiniteError(f"{net.spec.arch} actor produced a non-finite action mean")
    return net.clamp_action(mean)


def clamp_log_std(net: ActorCritic) -> None:
    np.clip(net.log_std, LOG_STD_MIN, LOG_STD_MAX, out=net.log_std)
