"""Fisher IPM critic objective with an augmented-Lagrangian moment constraint.

The critic maximizes

    L = E[f(real)] - E[f(fake)] + lam * (1 - omega) - rho/2 * (omega - 1)^2
    omega = (E[f(real)^2] + E[f(fake)^2]) / 2

and the multiplier follows the dual step ``lam <- lam - rho * (1 - omega)``.
Scalar versions operate on plain arrays; ``*_tensor`` versions are
differentiable and used for training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, mean


@dataclass(frozen=True)
class FisherState:
    lam: float = 0.0
    rho: float = 1e-6

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError("rho must be non-negative")


@dataclass(frozen=True)
class CriticBatch:
    f_real: np.ndarray
    f_fake: np.ndarray

    def __post_init__(self):
        real = np.asarray(self.f_real, dtype=np.float64).reshape(-1)
        fake = np.asarray(self.f_fake, dtype=np.float64).reshape(-1)
        if real.size == 0 or fake.size == 0:
            raise ValueError("critic batch must be non-empty")
        if not (np.all(np.isfinite(real)) and np.all(np.isfinite(fake))):
            raise ValueError("critic outputs must be finite")
        object.__setattr__(self, "f_real", real)
        object.__setattr__(self, "f_fake", fake)


def ipm_estimate(b: CriticBatch) -> float:
    return float(np.mean(b.f_real) - np.mean(b.f_fake))


def omega_hat(b: CriticBatch) -> float:
    return float(0.5 * (np.mean(b.f_real**2) + np.mean(b.f_fake**2)))


def critic_objective(b: CriticBatch, s: FisherState) -> float:
    """Augmented Lagrangian value the critic ascends."""
    om = omega_hat(b)
    return ipm_estimate(b) + s.lam * (1.0 - om) - 0.5 * s.rho * (om - 1.0) ** 2


def generator_objective(f_fake) -> float:
    f = np.asarray(f_fake, dtype=np.float64).reshape(-1)
    if f.size == 0:
        raise ValueError("generator objective needs at least one critic value")
    return float(-np.mean(f))


def lambda_update(s: FisherState, omega: float) -> FisherState:
    if not np.isfinite(omega):
        raise ValueError("omega must be finite")
    return FisherState(lam=s.lam - s.rho * (1.0 - omega), rho=s.rho)


def critic_objective_tensor(f_real: Tensor, f_fake: Tensor, s: FisherState) -> tuple[Tensor, Tensor, Tensor]:
    """Differentiable ``(L, ipm, omega)`` from critic output tensors."""
    ipm = mean(f_real) - mean(f_fake)
    omega = 0.5 * (mean(f_real * f_real) + mean(f_fake * f_fake))
    gap = 1.0 - omega
    lagr = ipm + s.lam * gap - (0.5 * s.rho) * (gap * gap)
    return lagr, ipm, omega


def generator_objective_tensor(f_fake: Tensor) -> Tensor:
    return -mean(f_fake)
