"""Optimizer suite for nonnegative scalar objectives over flat parameter vectors.

The relaxed steepest-descent step assumes the objective's minimum is
approximately 0 and solves the first-order model L(p + d) ~ L(p) + <d, J> = 0
along the negative gradient, giving the step size alpha = L / ||J||^2. Plain
gradient descent and Adam are provided as baselines behind the same interface.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

LOSS_FLOOR = 1e-12
GRAD_FLOOR = 1e-12
DEFAULT_STEP_CAP = 1e3


class StationaryPointError(RuntimeError):
    """Raised when the gradient vanishes while the loss is still positive."""


class Objective:
    """Scalar objective: a loss and its gradient over a flat parameter vector.

    Subclasses may override value_and_gradient when the two can share work.
    The relaxed steepest-descent step requires the loss to be nonnegative on
    the domain it is used on.
    """

    def evaluate(self, params: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, params: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_and_gradient(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        return self.evaluate(params), self.gradient(params)


class QuadraticObjective(Objective):
    """f(x) = curvature * (x - center)^2 + offset, on a single parameter."""

    def __init__(self, center: float = 5.0, offset: float = 2.0,
                 curvature: float = 1.0):
        self.center = center
        self.offset = offset
        self.curvature = curvature

    def evaluate(self, params):
        x = float(np.asarray(params).reshape(()))
        return self.curvature * (x - self.center) ** 2 + self.offset

    def gradient(self, params):
        x = float(np.asarray(params).reshape(()))
        return np.array([2.0 * self.curvature * (x - self.center)])


@dataclass
class RsdStepRecord:
    iteration: int
    loss: float
    alpha: float
    grad_norm_sq: float
    status: str  # "stepped" or "converged"
    params_snapshot: np.ndarray | None = None


def rsd_step(objective: Objective, params: np.ndarray, *, iteration: int = 0,
             loss_floor: float = LOSS_FLOOR, grad_floor: float = GRAD_FLOOR,
             step_cap: float | None = DEFAULT_STEP_CAP,
             keep_snapshot: bool = False) -> tuple[np.ndarray, RsdStepRecord]:
    """One relaxed steepest-descent update: params - (loss/||J||^2) * J.

    Returns the params unchanged with a "converged" record when the loss is
    at or below the floor. Raises StationaryPointError when the gradient
    norm is below the floor but the loss is not.
    """
    params = np.asarray(params, dtype=np.float64)
    loss, grad = objective.value_and_gradient(params)
    loss = float(loss)
    if loss <= loss_floor:
        record = RsdStepRecord(iteration, loss, 0.0, float(np.dot(grad, grad)),
                               "converged",
                               params.copy() if keep_snapshot else None)
        return params, record
    grad = np.asarray(grad, dtype=np.float64)
    grad_norm_sq = float(np.dot(grad, grad))
    if grad_norm_sq <= grad_floor:
        raise StationaryPointError(
            f"stationary point with nonzero loss {loss:.6g} "
            f"(||J||^2 = {grad_norm_sq:.3g})"
        )
    alpha = loss / grad_norm_sq
    if step_cap is not None:
        alpha = min(alpha, step_cap)
    new_params = params - alpha * grad
    record = RsdStepRecord(iteration, loss, alpha, grad_norm_sq, "stepped",
                           params.copy() if keep_snapshot else None)
    return new_params, record


def rsd_optimize(objective: Objective, params: np.ndarray, iterations: int,
                 **step_kwargs) -> tuple[np.ndarray, list[RsdStepRecord]]:
    """Apply rsd_step repeatedly, stopping early once converged.

    The trajectory holds one record per actual step; a run that starts (or
    lands) at zero loss ends without appending a converged pseudo-step.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    params = np.asarray(params, dtype=np.float64)
    trajectory: list[RsdStepRecord] = []
    for i in range(iterations):
        params, record = rsd_step(objective, params, iteration=i, **step_kwargs)
        if record.status == "converged":
            break
        trajectory.append(record)
    return params, trajectory


def sgd_step(objective: Objective, params: np.ndarray, lr: float) -> np.ndarray:
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    params = np.asarray(params, dtype=np.float64)
    return params - lr * np.asarray(objective.gradient(params), dtype=np.float64)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params))


def adam_step(objective: Objective, params: np.ndarray, lr: float,
              state: AdamState, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> np.ndarray:
    """Standard Adam update; the state is mutated in place."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(objective.gradient(params), dtype=np.float64)
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


class FrameCache:
    """Ring buffer of (frame, features) keyed by frame index, oldest-first eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: OrderedDict[int, tuple[np.ndarray, np.ndarray]] = OrderedDict()

    def put(self, index: int, frame: np.ndarray, features: np.ndarray) -> None:
        self._entries[index] = (frame, features)
        self._entries.move_to_end(index)
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)

    def get(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        if index not in self._entries:
            raise RuntimeError(
                f"frame cache miss for index {index}: cached {list(self._entries)}"
            )
        return self._entries[index]

    def __contains__(self, index: int) -> bool:
        return index in self._entries

    def __len__(self) -> int:
        return len(self._entries)
