"""Closed-form convergence bounds for SGC and the instance constants they need.

Both bounds are stated for the *sum* loss ``1/2 ||X beta - y||^2``. The engine
works with the mean gradient, so a sum-form step ``gamma`` corresponds to an
engine step ``m * gamma``; :func:`engine_l2_schedule` and
:func:`engine_inverse_lambda_schedule` do that conversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import InverseLambdaStep, TheoremL2Step


class HypothesisError(ValueError):
    """A bound was requested outside the regime where it is proved."""


@dataclass(frozen=True)
class BoundInputs:
    T: int
    p: float
    n: int
    m: int
    epsilon: float | None = None
    d: float | None = None
    mu: float | None = None
    residual_norm_sq: float | None = None  # ||X beta* - y||^2
    spectral_norm: float | None = None  # ||X^T X||
    beta0_err_sq: float | None = None
    lam: float | None = None  # strong-convexity constant of the sum loss
    C_sq: float | None = None  # sup of ||grad_i||^2 over the feasible set
    d_min: int | None = None


def _need(b: BoundInputs, *names):
    missing = [k for k in names if getattr(b, k) is None]
    if missing:
        raise ValueError(f"bound inputs missing: {', '.join(missing)}")


def thm3_bound(b: BoundInputs, check: bool = True) -> float:
    """``eps^2 ||beta0 - beta*||^2 + 2/(T d) ln^2(1/eps^2) p/(1-p) mu ||r||^2/||X^T X||^2``.

    Uses the constant 2 reached at the end of the proof (the displayed
    statement has 1).
    """
    _need(b, "epsilon", "d", "mu", "residual_norm_sq", "spectral_norm", "beta0_err_sq")
    eps, p, d, T = b.epsilon, b.p, b.d, b.T
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    L = math.log(1.0 / eps**2)
    odds = p / (1.0 - p)
    if check:
        if T < 2 * L:
            raise HypothesisError(f"T >= 2 ln(1/eps^2) fails: T={T} < {2 * L:.6g}")
        if d < 8 * b.mu * odds:
            raise HypothesisError(f"d >= 8 mu p/(1-p) fails: d={d:.6g} < {8 * b.mu * odds:.6g}")
        if b.n < 8 * odds:
            raise HypothesisError(f"n >= 8 p/(1-p) fails: n={b.n} < {8 * odds:.6g}")
    r_tilde_sq = b.residual_norm_sq / b.spectral_norm**2
    return eps**2 * b.beta0_err_sq + (2.0 / (T * d)) * L**2 * odds * b.mu * r_tilde_sq


def thm4_bound(b: BoundInputs) -> float:
    """``4/(lam^2 T) m C^2 (p/((1-p) d_min) + (m-1) p/(n (1-p)) + m)``."""
    _need(b, "lam", "C_sq", "d_min")
    if not b.lam > 0:
        raise ValueError("lambda must be positive")
    if b.T < 1:
        raise ValueError("T must be at least 1")
    if b.d_min == 0:
        raise ValueError("d_min must be positive")
    if not 0 <= b.p < 1:
        raise ValueError("p must lie in [0, 1)")
    p, m, n = b.p, b.m, b.n
    odds = p / (1.0 - p)
    bracket = odds / b.d_min + (m - 1) * p / (n * (1.0 - p)) + m
    return 4.0 / (b.lam**2 * b.T) * m * b.C_sq * bracket


def gradient_bound_sq(X, y, radius: float) -> float:
    """``max_i sup_{||beta|| <= radius} ||(<x_i, beta> - y_i) x_i||^2``.

    The supremum is attained at ``beta = -sign(y_i) radius x_i/||x_i||``, giving
    ``((radius ||x_i|| + |y_i|) ||x_i||)^2``.
    """
    X = np.asarray(X, dtype=float)
    nrm = np.linalg.norm(X, axis=1)
    return float(np.max(((radius * nrm + np.abs(y)) * nrm) ** 2))


def engine_l2_schedule(epsilon: float, spectral_norm: float, m: int) -> TheoremL2Step:
    return TheoremL2Step(epsilon=epsilon, spectral_norm=spectral_norm / m)


def engine_inverse_lambda_schedule(lam: float, m: int) -> InverseLambdaStep:
    return InverseLambdaStep(lam=lam / m)
