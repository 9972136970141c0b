"""Built-in continuous-control tasks, observation normalization and a
uniform-random baseline.

All dynamics use semi-implicit Euler with ``DT = 0.05``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn_core import make_rng

DT = 0.05


@dataclass(frozen=True)
class EnvDescriptor:
    name: str
    obs_dim: int
    act_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    max_episode_steps: int

    def __post_init__(self):
        if not all(lo < hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action_low must be below action_high")


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


class Env:
    """Minimal episodic environment. Subclasses define ``descriptor``,
    ``_reset_state`` and ``_advance``."""

    descriptor: EnvDescriptor

    def __init__(self):
        self.rng = make_rng(0)
        self.steps = 0

    @property
    def action_low(self) -> np.ndarray:
        return np.asarray(self.descriptor.action_low)

    @property
    def action_high(self) -> np.ndarray:
        return np.asarray(self.descriptor.action_high)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = make_rng(seed)
        self.steps = 0
        self._reset_state()
        return self._obs()

    def step(self, action) -> StepResult:
        a = np.asarray(action, dtype=np.float64).reshape(self.descriptor.act_dim)
        if np.any(a < self.action_low) or np.any(a > self.action_high) or not np.all(np.isfinite(a)):
            raise ValueError(f"{self.descriptor.name}: action {a} outside bounds")
        reward, terminated = self._advance(a)
        self.steps += 1
        truncated = not terminated and self.steps >= self.descriptor.max_episode_steps
        return StepResult(self._obs(), float(reward), bool(terminated), truncated)


class PointReacher(Env):
    """Drive a damped 2-D point mass onto a goal sampled in ``[-1, 1]^2``."""

    descriptor = EnvDescriptor("point-reacher", 6, 2, (-1.0, -1.0), (1.0, 1.0), 200)
    friction = 0.95
    goal_radius = 0.05
    goal_bonus = 10.0

    def _reset_state(self):
        self.goal = self.rng.uniform(-1.0, 1.0, 2)
        self.pos = self.rng.uniform(-1.0, 1.0, 2)
        while np.linalg.norm(self.pos - self.goal) < self.goal_radius:
            self.pos = self.rng.uniform(-1.0, 1.0, 2)
        self.vel = np.zeros(2)

    def set_state(self, pos, vel, goal):
        self.pos, self.vel, self.goal = (np.array(v, dtype=np.float64) for v in (pos, vel, goal))

    def _obs(self):
        return np.concatenate([self.pos, self.vel, self.goal - self.pos])

    def _advance(self, a):
        was_outside = np.linalg.norm(self.pos - self.goal) >= self.goal_radius
        self.vel = (self.vel + a * DT) * self.friction
        self.pos = self.pos + self.vel * DT
        dist = float(np.linalg.norm(self.pos - self.goal))
        reward = -dist - 0.01 * float(a @ a)
        reached = dist < self.goal_radius
        if reached and was_outside:
            reward += self.goal_bonus
        return reward, reached


def wrap_angle(theta: float) -> float:
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


class PendulumSwingup(Env):
    """Torque-limited pendulum; ``theta = 0`` is upright."""

    descriptor = EnvDescriptor("pendulum-swingup", 3, 1, (-2.0,), (2.0,), 200)
    gravity = 10.0
    mass = 1.0
    length = 1.0
    max_speed = 8.0

    def _reset_state(self):
        self.theta = float(self.rng.uniform(-math.pi, math.pi))
        self.theta_dot = float(self.rng.uniform(-1.0, 1.0))

    def set_state(self, theta, theta_dot):
        self.theta, self.theta_dot = float(theta), float(theta_dot)

    def _obs(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot / self.max_speed])

    def angular_acceleration(self, theta: float, torque: float) -> float:
        g, m, l = self.gravity, self.mass, self.length
        return 3.0 * g / (2.0 * l) * math.sin(theta) + 3.0 * torque / (m * l * l)

    def _advance(self, a):
        u = float(a[0])
        th = wrap_angle(self.theta)
        cost = th * th + 0.1 * self.theta_dot**2 + 0.001 * u * u
        acc = self.angular_acceleration(self.theta, u)
        self.theta_dot = min(max(self.theta_dot + acc * DT, -self.max_speed), self.max_speed)
        self.theta = self.theta + self.theta_dot * DT
        return -cost, False


class CartPoleContinuous(Env):
    """Cart-pole balancing with a continuous force on the cart."""

    descriptor = EnvDescriptor("cartpole-continuous", 4, 1, (-10.0,), (10.0,), 500)
    gravity = 9.8
    mass_cart = 1.0
    mass_pole = 0.1
    half_length = 0.5
    theta_limit = 12.0 * 2.0 * math.pi / 360.0
    x_limit = 2.4

    def _reset_state(self):
        self.state = self.rng.uniform(-0.05, 0.05, 4)

    def set_state(self, state):
        self.state = np.array(state, dtype=np.float64)

    def _obs(self):
        return self.state.copy()

    def _advance(self, a):
        x, x_dot, th, th_dot = self.state
        force = float(a[0])
        total = self.mass_cart + self.mass_pole
        pml = self.mass_pole * self.half_length
        cos, sin = math.cos(th), math.sin(th)
        temp = (force + pml * th_dot * th_dot * sin) / total
        th_acc = (self.gravity * sin - cos * temp) / (
            self.half_length * (4.0 / 3.0 - self.mass_pole * cos * cos / total)
        )
        x_acc = temp - pml * th_acc * cos / total
        x_dot = x_dot + DT * x_acc
        x = x + DT * x_dot
        th_dot = th_dot + DT * th_acc
        th = th + DT * th_dot
        self.state = np.array([x, x_dot, th, th_dot])
        done = abs(x) > self.x_limit or abs(th) > self.theta_limit
        return 1.0, done


ENVS = {
    "point-reacher": PointReacher,
    "pendulum-swingup": PendulumSwingup,
    "cartpole-continuous": CartPoleContinuous,
}

# observation/action sizes of the MuJoCo tasks, used for parameter counting only
MUJOCO_DIMS = {
    "halfcheetah": (17, 6),
    "walker2d": (17, 6),
    "hopper": (11, 3),
    "invertedpendulum": (4, 1),
    "swimmer": (8, 2),
    "pusher": (23, 7),
}


def make_env(name: str) -> Env:
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None


def lookup_dims(name: str) -> tuple[int, int]:
    """Resolve ``obs``/``act`` sizes from a built-in env, a MuJoCo name, or
    a ``name:obs:act`` string such as ``halfcheetah:17:6``."""
    if name in ENVS:
        d = ENVS[name].descriptor
        return d.obs_dim, d.act_dim
    parts = name.split(":")
    if len(parts) == 3:
        return int(parts[1]), int(parts[2])
    if name in MUJOCO_DIMS:
        return MUJOCO_DIMS[name]
    raise ValueError(f"unknown environment dims {name!r}")


class ObsNormalizer:
    """Running mean/variance (Welford) with clipping of standardized values."""

    def __init__(self, dim: int, clip: float = 5.0):
        self.dim = dim
        self.clip = clip
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.frozen = False

    @property
    def var(self) -> np.ndarray:
        return self.m2 / self.count if self.count > 0 else np.ones(self.dim)

    def update(self, x) -> None:
        if self.frozen:
            return
        x = np.asarray(x, dtype=np.float64)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def normalize(self, x) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)

    def __call__(self, x) -> np.ndarray:
        self.update(x)
        return self.normalize(x)

    def state_dict(self) -> dict:
        return {"clip": self.clip, "count": self.count,
                "mean": self.mean.tolist(), "m2": self.m2.tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "ObsNormalizer":
        norm = cls(len(state["mean"]), state["clip"])
        norm.count = state["count"]
        norm.mean = np.asarray(state["mean"], dtype=np.float64)
        norm.m2 = np.asarray(state["m2"], dtype=np.float64)
        return norm


def random_policy_baseline(env: Env, episodes: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and std of undiscounted returns under uniform-random actions."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    returns = []
    for _ in range(episodes):
        env.reset(seed=int(rng.integers(2**31)))
        total, done = 0.0, False
        while not done:
            res = env.step(rng.uniform(env.action_low, env.action_high))
            total += res.reward
            done = res.terminated or res.truncated
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))
