"""Flat parameter storage, Adam, RNG construction and gradient checking.

Every network keeps its learnable tensors as reshaped views into one flat
float64 array, so the optimizer, checkpointing and finite-difference checks
all work on a single vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; equal seeds give bitwise-equal streams."""
    return np.random.Generator(np.random.PCG64(seed))


class ParamStore:
    """Flat float64 parameter and gradient arrays with named slices.

    Slices are allocated append-only, so they are disjoint and in bounds by
    construction. ``view(name)`` returns a reshaped view that aliases
    ``values``; in-place optimizer updates are seen by every layer.
    """

    def __init__(self, capacity: int = 0):
        self.values = np.zeros(capacity, dtype=np.float64)
        self.grads = np.zeros(capacity, dtype=np.float64)
        self.slices: dict[str, tuple[int, int]] = {}
        self.shapes: dict[str, tuple[int, ...]] = {}
        self._used = 0
        # bumped by the optimizer; lets layers detect stale forward caches
        self.version = 0

    def __len__(self) -> int:
        return self._used

    def allocate(self, name: str, shape: tuple[int, ...]) -> None:
        if name in self.slices:
            raise KeyError(f"slice {name!r} already allocated")
        n = int(np.prod(shape)) if shape else 1
        offset = self._used
        if offset + n > self.values.size:
            grow = max(offset + n, 2 * self.values.size)
            values = np.zeros(grow)
            grads = np.zeros(grow)
            values[:offset] = self.values[:offset]
            grads[:offset] = self.grads[:offset]
            self.values, self.grads = values, grads
        self.slices[name] = (offset, n)
        self.shapes[name] = tuple(shape)
        self._used += n

    def finalize(self) -> None:
        """Trim spare capacity so values/grads have exactly len(self) entries.

        Views handed out before this call would dangle, so layers must only
        call ``view`` afterwards.
        """
        self.values = self.values[: self._used].copy()
        self.grads = self.grads[: self._used].copy()

    def view(self, name: str) -> np.ndarray:
        offset, n = self.slices[name]
        return self.values[offset : offset + n].reshape(self.shapes[name])

    def grad_view(self, name: str) -> np.ndarray:
        offset, n = self.slices[name]
        return self.grads[offset : offset + n].reshape(self.shapes[name])

    def slice_of(self, index: int) -> str:
        for name, (offset, n) in self.slices.items():
            if offset <= index < offset + n:
                return name
        raise IndexError(index)


def zero_grads(params: ParamStore) -> None:
    params.grads[...] = 0.0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = None

    @classmethod
    def for_params(cls, params: ParamStore, **kwargs) -> "AdamState":
        n = len(params)
        return cls(m=np.zeros(n), v=np.zeros(n), **kwargs)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update of ``params.values`` in place.

    Gradients are left untouched; callers zero them between minibatches.
    """
    g = params.grads
    if state.m.shape != g.shape:
        raise ValueError("optimizer state does not match parameter store")
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NonFiniteError(f"non-finite gradient in slice {params.slice_of(bad)!r}")
    if state.max_grad_norm is not None:
        norm = float(np.sqrt(np.dot(g, g)))
        if norm > state.max_grad_norm:
            g = g * (state.max_grad_norm / norm)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * g * g
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    params.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.version += 1


def finite_diff_check(
    loss_fn: Callable[[ParamStore], float],
    params: ParamStore,
    h: float = 1e-5,
    analytic: np.ndarray | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must return the loss and, as a side effect, leave the analytic
    gradient in ``params.grads`` (it is zeroed first). The error per parameter
    is ``|analytic - fd| / max(1, |fd|)``. Parameter values are restored.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    zero_grads(params)
    base = loss_fn(params)
    if not np.isfinite(base):
        raise NonFiniteError("loss is not finite at the base point")
    grad = params.grads.copy() if analytic is None else np.asarray(analytic, dtype=np.float64)

    x = params.values
    worst = 0.0
    for i in range(len(params)):
        old = x[i]
        x[i] = old + h
        f_plus = loss_fn(params)
        x[i] = old - h
        f_minus = loss_fn(params)
        x[i] = old
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"loss not finite when perturbing {params.slice_of(i)!r}")
        fd = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    zero_grads(params)
    return worst
