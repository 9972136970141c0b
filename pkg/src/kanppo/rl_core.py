"""Rollout storage, TD errors, GAE and minibatch indexing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray  # pre-clamp
    reward: float
    terminated: bool
    truncated: bool
    value: float
    log_prob: float
    # V(s_{t+1}) of the final observation when the episode was truncated here
    truncation_value: float = 0.0


class RolloutBuffer:
    """Fixed-capacity on-policy storage for ``horizon`` transitions."""

    def __init__(self, horizon: int, obs_dim: int, act_dim: int):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        self.obs = np.zeros((horizon, obs_dim))
        self.actions = np.zeros((horizon, act_dim))
        self.rewards = np.zeros(horizon)
        self.terminated = np.zeros(horizon, dtype=bool)
        self.truncated = np.zeros(horizon, dtype=bool)
        self.values = np.zeros(horizon)
        self.log_probs = np.zeros(horizon)
        self.truncation_values = np.zeros(horizon)
        self.bootstrap_value = 0.0
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size == self.horizon

    def add(self, tr: Transition) -> None:
        if self.full:
            raise IndexError("rollout buffer is full")
        if tr.terminated and tr.truncated:
            raise ValueError("a step cannot be both terminated and truncated")
        if not np.isfinite(tr.reward):
            raise ValueError("reward must be finite")
        i = self.size
        self.obs[i] = tr.obs
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.terminated[i] = tr.terminated
        self.truncated[i] = tr.truncated
        self.values[i] = tr.value
        self.log_probs[i] = tr.log_prob
        self.truncation_values[i] = tr.truncation_value
        self.size += 1

    def reset(self) -> None:
        self.size = 0
        self.truncated[:] = False
        self.terminated[:] = False

    @classmethod
    def from_arrays(cls, rewards, values, terminated=None, truncated=None,
                    bootstrap_value=0.0, truncation_values=None) -> "RolloutBuffer":
        """Build a scalar-observation buffer for advantage computations."""
        rewards = np.asarray(rewards, dtype=np.float64)
        T = rewards.size
        buf = cls(T, 1, 1)
        buf.rewards[:] = rewards
        buf.values[:] = values
        if terminated is not None:
            buf.terminated[:] = terminated
        if truncated is not None:
            buf.truncated[:] = truncated
        if truncation_values is not None:
            buf.truncation_values[:] = truncation_values
        buf.bootstrap_value = float(bootstrap_value)
        buf.size = T
        return buf


@dataclass
class AdvantageBatch:
    advantages: np.ndarray
    returns: np.ndarray
    gamma: float
    lam: float


def td_error(r_t: float, v_t: float, v_next: float, terminal: bool, gamma: float) -> float:
    return r_t + gamma * v_next * (1.0 - float(terminal)) - v_t


def next_values(buffer: RolloutBuffer) -> np.ndarray:
    """V(s_{t+1}) per step: the following stored value, the truncation value
    at a time-limit cut, or the buffer's bootstrap value at the end."""
    T = buffer.size
    nv = np.empty(T)
    nv[:-1] = buffer.values[1:T]
    nv[-1] = buffer.bootstrap_value
    cut = buffer.truncated[:T]
    nv[cut] = buffer.truncation_values[:T][cut]
    return nv


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> AdvantageBatch:
    """Backward GAE recursion over a full buffer.

    Termination zeroes the bootstrap; both termination and truncation stop
    credit from flowing across the episode boundary.
    """
    T = buffer.size
    if T == 0:
        raise ValueError("cannot compute advantages of an empty buffer")
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("gamma and lambda must lie in [0, 1]")
    rewards, values = buffer.rewards[:T], buffer.values[:T]
    term = buffer.terminated[:T]
    not_term = 1.0 - term
    chain = not_term * (1.0 - buffer.truncated[:T])
    deltas = rewards + gamma * next_values(buffer) * not_term - values
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        running = deltas[t] + gamma * lam * chain[t] * running
        adv[t] = running
    return AdvantageBatch(adv, adv + values, gamma, lam)


def normalize_advantages(batch: AdvantageBatch, eps: float = 1e-8) -> AdvantageBatch:
    adv = batch.advantages
    if adv.size == 0 or np.all(adv == adv[0]):
        norm = np.zeros_like(adv)
    else:
        norm = (adv - adv.mean()) / (adv.std() + eps)
    return AdvantageBatch(norm, batch.returns, batch.gamma, batch.lam)


def minibatch_iter(T: int, M: int, rng: np.random.Generator):
    """Index arrays covering one fresh permutation of ``range(T)``."""
    if not 1 <= M:
        raise ValueError("minibatch size must be >= 1")
    if M > T:
        raise ValueError(f"minibatch size {M} exceeds rollout length {T}")
    perm = rng.permutation(T)
    return [perm[start : start + M] for start in range(0, T, M)]
