"""SGD with momentum and weight decay, early stopping, and quadratic oracles.

The quadratic helpers work on diagonal Hessians, where the closed forms for
L1/L2-regularized minima and for the gradient-descent trajectory are exact.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class NumericalAbort(FloatingPointError):
    """Raised when a non-finite gradient or weight would enter training."""


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    l2_alpha: float = 0.0
    l1_alpha: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.l2_alpha < 0 or self.l1_alpha < 0:
            raise ValueError("decay coefficients must be >= 0")


@dataclass
class OptimizerState:
    velocities: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params])


def sgd_step(params, grads, state: OptimizerState, cfg: OptimConfig) -> None:
    """One momentum step, in place on ``params`` and ``state``.

    Decay terms skip the last (bias) row of every weight matrix.
    """
    if len(params) != len(grads) or len(params) != len(state.velocities):
        raise ValueError("params, grads and optimizer state must align")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericalAbort(f"non-finite gradient for parameter block {i}")
    for w, g, v in zip(params, grads, state.velocities):
        if w.shape != g.shape or w.shape != v.shape:
            raise ValueError(f"shape mismatch {w.shape} / {g.shape} / {v.shape}")
        total = g
        if cfg.l2_alpha or cfg.l1_alpha:
            total = g.copy()
            total[:-1] += cfg.l2_alpha * w[:-1] + cfg.l1_alpha * np.sign(w[:-1])
        # overflow is reported below as NumericalAbort, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            v *= cfg.momentum
            v -= cfg.learning_rate * total
            w += v
    for i, w in enumerate(params):
        if not np.all(np.isfinite(w)):
            raise NumericalAbort(f"parameter block {i} became non-finite")


class Decision(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass
class EarlyStopState:
    """Tracks the best validation loss and a snapshot of the matching weights.

    ``patience=None`` keeps the best snapshot without ever stopping.
    """
    patience: int | None = None
    best_validation_loss: float = np.inf
    best_weights: list[np.ndarray] | None = None
    best_epoch: int = -1
    epochs_since_improve: int = 0
    epoch: int = field(default=0)


def early_stop_update(state: EarlyStopState, validation_loss: float, params) -> Decision:
    if not np.isfinite(validation_loss):
        raise NumericalAbort("validation loss is not finite")
    state.epoch += 1
    if validation_loss < state.best_validation_loss:
        state.best_validation_loss = float(validation_loss)
        state.best_weights = [p.copy() for p in params]
        state.best_epoch = state.epoch
        state.epochs_since_improve = 0
    else:
        state.epochs_since_improve += 1
    if state.patience is not None and state.epochs_since_improve >= state.patience:
        return Decision.STOP
    return Decision.CONTINUE


@dataclass
class QuadraticModel:
    """``0.5 (w - w_star)^T diag(eigenvalues) (w - w_star)``."""
    eigenvalues: np.ndarray
    w_star: np.ndarray

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64).ravel()
        self.w_star = np.asarray(self.w_star, dtype=np.float64).ravel()
        if self.eigenvalues.shape != self.w_star.shape:
            raise ValueError("eigenvalues and w_star must have the same length")
        if np.any(self.eigenvalues <= 0):
            raise ValueError("diagonal Hessian entries must be positive")

    def loss(self, w) -> float:
        d = np.asarray(w, dtype=np.float64) - self.w_star
        return float(0.5 * np.sum(self.eigenvalues * d * d))

    def gradient(self, w) -> np.ndarray:
        return self.eigenvalues * (np.asarray(w, dtype=np.float64) - self.w_star)


def quadratic_gd_trajectory(model: QuadraticModel, lr: float, steps: int) -> np.ndarray:
    """Run ``steps`` plain gradient-descent steps from the origin."""
    if np.any(np.abs(1.0 - lr * model.eigenvalues) >= 1.0):
        raise ValueError("learning rate violates |1 - lr * eigenvalue| < 1")
    w = np.zeros_like(model.w_star)
    for _ in range(steps):
        w = w - lr * model.gradient(w)
    return w


def quadratic_gd_closed_form(model: QuadraticModel, lr: float, steps: int) -> np.ndarray:
    return (1.0 - (1.0 - lr * model.eigenvalues) ** steps) * model.w_star


def l1_closed_form(model: QuadraticModel, alpha: float) -> np.ndarray:
    """Soft-thresholding minimizer of the L1-regularized diagonal quadratic."""
    w = model.w_star
    return np.sign(w) * np.maximum(np.abs(w) - alpha / model.eigenvalues, 0.0)


def l2_closed_form(model: QuadraticModel, alpha: float) -> np.ndarray:
    lam = model.eigenvalues
    return lam / (lam + alpha) * model.w_star


def early_stopping_steps(lr: float, alpha: float) -> int:
    """Step count whose early-stopped GD mimics L2 decay ``alpha``."""
    return int(round(1.0 / (lr * alpha)))
