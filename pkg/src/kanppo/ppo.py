"""PPO objectives with analytic gradients, the minibatch update, the
collect-then-optimize training loop and deterministic evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .envs import Env, ObsNormalizer
from .networks import ActorCritic
from .nn_core import AdamState, NonFiniteError, adam_step, zero_grads
from .policy import (
    clamp_log_std,
    deterministic_action,
    entropy,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    sample_action,
)
from .rl_core import (
    AdvantageBatch,
    RolloutBuffer,
    Transition,
    compute_gae,
    minibatch_iter,
    normalize_advantages,
)

RATIO_LOG_CLAMP = 20.0
EVAL_SEED = 1_000_000


@dataclass(frozen=True)
class PpoConfig:
    epsilon: float = 0.2
    c1: float = 0.5
    c2: float = 0.0
    lr: float = 3e-4
    epochs: int = 10
    minibatch: int = 64
    horizon: int = 2048
    gamma: float = 0.99
    lam: float = 0.95
    total_steps: int = 100_000
    eval_episodes: int = 100
    normalize_obs: bool = True
    normalize_adv: bool = True
    obs_clip: float = 5.0
    max_grad_norm: float | None = None
    reward_scale: float = 1.0
    wall_time: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        for name in ("epochs", "minibatch", "horizon", "total_steps", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.minibatch > self.horizon:
            raise ValueError("minibatch must not exceed horizon")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


@dataclass
class LossReport:
    l_clip: float
    l_vf: float
    entropy: float
    total_loss: float
    approx_kl: float
    clip_fraction: float


@dataclass
class MetricsRow:
    seed: int
    env_step: int
    mean_return: float
    l_clip: float
    l_vf: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    wall_seconds: float


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


@dataclass
class Minibatch:
    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def ratio(logp_new, logp_old):
    return np.exp(np.clip(np.subtract(logp_new, logp_old), -RATIO_LOG_CLAMP, RATIO_LOG_CLAMP))


def clip_objective(r, adv, epsilon):
    return np.minimum(r * adv, np.clip(r, 1.0 - epsilon, 1.0 + epsilon) * adv)


def l_pg(logp, adv) -> float:
    """Batch mean of ``log pi * A`` (vanilla policy-gradient objective)."""
    return float(np.mean(np.asarray(logp) * np.asarray(adv)))


def combined_loss(batch: Minibatch, net: ActorCritic, config: PpoConfig) -> LossReport:
    """Minimized loss ``-L_clip + c1 * L_vf - c2 * entropy``.

    Gradients are accumulated into ``net.params.grads``.
    """
    n = batch.obs.shape[0]
    eps = config.epsilon
    mean, a_cache = net.actor.forward(batch.obs)
    v_out, c_cache = net.critic.forward(batch.obs)
    v = v_out[:, 0]
    adv = batch.advantages

    logp = gaussian_log_prob(mean, net.log_std, batch.actions)
    diff = logp - batch.logp_old
    r = ratio(logp, batch.logp_old)
    s1 = r * adv
    s2 = np.clip(r, 1.0 - eps, 1.0 + eps) * adv
    l_clip = float(np.mean(np.minimum(s1, s2)))
    err = v - batch.returns
    l_vf = float(np.mean(err * err))
    ent = entropy(net)
    total = -l_clip + config.c1 * l_vf - config.c2 * ent
    if not np.isfinite(total):
        raise NonFiniteError(f"non-finite loss: l_clip={l_clip} l_vf={l_vf} entropy={ent}")

    # the min picks the unclipped branch whenever clipping is not pessimistic
    dobj_dr = adv * (s1 <= s2)
    dlogp = -dobj_dr * r * (np.abs(diff) <= RATIO_LOG_CLAMP) / n
    dmean, dls = gaussian_log_prob_grads(mean, net.log_std, batch.actions, dlogp)
    net.actor.backward(a_cache, dmean)
    net.dlog_std += dls - config.c2
    net.critic.backward(c_cache, (config.c1 * 2.0 / n * err)[:, None])

    log_r = np.clip(diff, -RATIO_LOG_CLAMP, RATIO_LOG_CLAMP)
    return LossReport(
        l_clip=l_clip,
        l_vf=l_vf,
        entropy=ent,
        total_loss=float(total),
        approx_kl=float(np.mean((r - 1.0) - log_r)),
        clip_fraction=float(np.mean(np.abs(r - 1.0) > eps)),
    )


def ppo_update(net: ActorCritic, buffer: RolloutBuffer, advantages: AdvantageBatch,
               config: PpoConfig, optimizer: AdamState, rng: np.random.Generator) -> list[LossReport]:
    """K epochs of shuffled minibatch Adam steps on a frozen rollout."""
    T = buffer.size
    reports = []
    for _ in range(config.epochs):
        for idx in minibatch_iter(T, config.minibatch, rng):
            batch = Minibatch(
                buffer.obs[idx], buffer.actions[idx], buffer.log_probs[idx],
                advantages.advantages[idx], advantages.returns[idx],
            )
            zero_grads(net.params)
            reports.append(combined_loss(batch, net, config))
            adam_step(net.params, optimizer)
            clamp_log_std(net)
    return reports


def make_optimizer(net: ActorCritic, config: PpoConfig) -> AdamState:
    return AdamState.for_params(net.params, lr=config.lr, max_grad_norm=config.max_grad_norm)


@dataclass
class TrainResult:
    net: ActorCritic
    normalizer: ObsNormalizer
    history: list[MetricsRow]
    episode_returns: list[float]


def train(env: Env, net: ActorCritic, config: PpoConfig, rng: np.random.Generator,
          sink: Callable[[MetricsRow], None] | None = None, seed: int = 0) -> TrainResult:
    """Alternate T-step stochastic rollouts with PPO updates until
    ``config.total_steps`` environment steps have been collected.

    Everything random draws from ``rng``, so a fixed seed reproduces the run
    bit for bit.
    """
    d = env.descriptor
    norm = ObsNormalizer(d.obs_dim, config.obs_clip)
    optimizer = make_optimizer(net, config)
    buffer = RolloutBuffer(config.horizon, d.obs_dim, d.act_dim)
    history: list[MetricsRow] = []
    episode_returns: list[float] = []

    def prep(o, update):
        if not config.normalize_obs:
            return np.asarray(o, dtype=np.float64)
        return norm(o) if update else norm.normalize(o)

    start = time.perf_counter()
    raw = env.reset(seed=int(rng.integers(2**31)))
    ep_return = 0.0
    steps = 0
    while steps < config.total_steps:
        buffer.reset()
        for _ in range(config.horizon):
            o = prep(raw, True)
            value = float(net.value(o))
            s = sample_action(net, o, rng)
            try:
                res = env.step(s.clamped_action)
            except Exception as exc:
                raise RuntimeError(f"{d.name} failed at env step {steps}: {exc}") from exc
            ep_return += res.reward
            trunc_value = float(net.value(prep(res.obs, False))) if res.truncated else 0.0
            buffer.add(Transition(o, s.action, res.reward * config.reward_scale, res.terminated,
                                  res.truncated, value, s.log_prob, trunc_value))
            steps += 1
            if res.terminated or res.truncated:
                episode_returns.append(ep_return)
                ep_return = 0.0
                raw = env.reset(seed=int(rng.integers(2**31)))
            else:
                raw = res.obs
        buffer.bootstrap_value = float(net.value(prep(raw, False)))

        adv = compute_gae(buffer, config.gamma, config.lam)
        if config.normalize_adv:
            adv = normalize_advantages(adv)
        reports = ppo_update(net, buffer, adv, config, optimizer, rng)

        recent = episode_returns[-10:]
        row = MetricsRow(
            seed=seed,
            env_step=steps,
            mean_return=float(np.mean(recent)) if recent else float("nan"),
            l_clip=float(np.mean([r.l_clip for r in reports])),
            l_vf=float(np.mean([r.l_vf for r in reports])),
            entropy=reports[-1].entropy,
            approx_kl=float(np.mean([r.approx_kl for r in reports])),
            clip_fraction=float(np.mean([r.clip_fraction for r in reports])),
            wall_seconds=time.perf_counter() - start if config.wall_time else 0.0,
        )
        history.append(row)
        if sink is not None:
            sink(row)
    norm.frozen = True
    return TrainResult(net, norm, history, episode_returns)


def run_episode(env: Env, policy: Callable[[np.ndarray], np.ndarray], seed: int) -> float:
    obs = env.reset(seed=seed)
    total = 0.0
    while True:
        res = env.step(policy(obs))
        total += res.reward
        if res.terminated or res.truncated:
            return total
        obs = res.obs


def evaluate_policy(net: ActorCritic, env: Env, normalizer: ObsNormalizer | None,
                    episodes: int = 100, seed: int = EVAL_SEED) -> np.ndarray:
    """Undiscounted returns of the noise-free policy; episode ``i`` uses env
    seed ``seed + i`` and the normalizer is never updated."""

    def policy(obs):
        o = normalizer.normalize(obs) if normalizer is not None else obs
        return deterministic_action(net, o)

    return np.array([run_episode(env, policy, seed + i) for i in range(episodes)])
