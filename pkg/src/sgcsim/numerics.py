"""Dense linear-algebra primitives: Gram spectral norm, incoherence, least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MU_CLAMP = 1e-10


class ConvergenceError(RuntimeError):
    """Raised when an iterative method stops before reaching its tolerance."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralSummary:
    spectral_norm: float  # ||X^T X||_2
    frobenius_sq: float  # ||X||_F^2
    mu: float
    m: int


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix has non-finite entries")
    return X


def spectral_norm(X, tol: float = 1e-10, max_iters: int = 10_000) -> float:
    """Largest eigenvalue of ``X.T @ X`` by power iteration.

    The start vector is the normalized all-ones vector, so the result is a
    deterministic function of ``X``. Iteration stops once the Rayleigh quotient
    changes by less than ``tol`` relative to its value.
    """
    X = as_matrix(X)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.any(X):
        raise ValueError("spectral norm of a zero matrix is not defined here")
    # work on X / max|x_ij| so tiny or huge entries cannot under- or overflow
    s = float(np.max(np.abs(X)))
    X = X / s
    ell = X.shape[1]
    v = np.full(ell, 1.0 / np.sqrt(ell))
    w = X.T @ (X @ v)
    if not np.any(w):
        # start vector in the null space; fall back to the heaviest column
        v = np.zeros(ell)
        v[np.argmax((X**2).sum(axis=0))] = 1.0
        w = X.T @ (X @ v)
    lam = float(v @ w)
    residual = np.inf
    for _ in range(max_iters):
        v = w / np.linalg.norm(w)
        w = X.T @ (X @ v)
        lam_new = float(v @ w)
        residual = float(np.linalg.norm(w - lam_new * v))
        if abs(lam_new - lam) <= tol * lam_new or residual <= tol * lam_new:
            return lam_new * s * s
        lam = lam_new
    lam, residual = lam * s * s, residual * s * s
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(last estimate {lam:.17g}, residual {residual:.3g})",
        iterate=v,
        residual=residual,
    )


def incoherence_mu(X, tol: float = 1e-10) -> SpectralSummary:
    X = as_matrix(X)
    if not np.any(X):
        raise ValueError("incoherence of a zero matrix is undefined")
    m = X.shape[0]
    lam = spectral_norm(X, tol=tol)
    fro = float(np.sum(X * X))
    mu = fro / (m * lam)
    if 1.0 < mu <= 1.0 + MU_CLAMP:
        mu = 1.0
    elif -MU_CLAMP <= mu < 0.0:
        mu = 0.0
    return SpectralSummary(spectral_norm=lam, frobenius_sq=fro, mu=mu, m=m)


def _check_full_rank(X: np.ndarray, rtol: float = 1e-13) -> None:
    gram = X.T @ X
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("X^T X is not positive definite (rank deficient X)") from exc
    piv = np.diag(chol) ** 2
    if piv.min() <= rtol * piv.max():
        raise RankDeficientError(
            f"X^T X is numerically singular (pivot ratio {piv.min() / piv.max():.3g})"
        )


def least_squares_optimum(X, y, tol: float = 1e-12, max_iters: int | None = None) -> np.ndarray:
    """Solve ``X^T X beta = X^T y`` by conjugate gradients on the normal equations.

    Returns ``beta`` with ``||X^T (X beta - y)|| <= tol * ||X^T y||``. The
    residual is recomputed from scratch every ``ell`` steps (restarted CG),
    which acts as iterative refinement.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    # scaling X and y together leaves the solution unchanged
    s = float(np.max(np.abs(X)))
    X, y = X / s, y / s
    _check_full_rank(X)
    ell = X.shape[1]
    if max_iters is None:
        max_iters = 50 * ell + 100
    rhs = X.T @ y
    target = tol * np.linalg.norm(rhs)
    beta = np.zeros(ell)
    if target == 0.0:
        return beta
    gram_scale = np.sum(X * X)
    it = 0
    while it < max_iters:
        r = rhs - X.T @ (X @ beta)
        rr = float(r @ r)
        if np.sqrt(rr) <= target:
            return beta
        p = r.copy()
        for _ in range(ell):
            Xp = X @ p
            curv = float(Xp @ Xp)
            if curv <= np.finfo(float).eps * gram_scale * float(p @ p):
                raise RankDeficientError(f"conjugate-gradient breakdown at iteration {it}")
            alpha = rr / curv
            beta = beta + alpha * p
            r = r - alpha * (X.T @ Xp)
            rr_new = float(r @ r)
            it += 1
            if np.sqrt(rr_new) <= target or it >= max_iters:
                break
            p = r + (rr_new / rr) * p
            rr = rr_new
    r = rhs - X.T @ (X @ beta)
    if np.linalg.norm(r) <= target:
        return beta
    raise ConvergenceError(
        f"normal-equations CG did not reach tol={tol:g} in {max_iters} iterations",
        iterate=beta,
        residual=float(np.linalg.norm(r)),
    )


def min_eigenvalue(X, tol: float = 1e-12, max_iters: int = 10_000) -> float:
    """Smallest eigenvalue of ``X.T @ X`` by inverse iteration (Cholesky solves)."""
    X = as_matrix(X)
    s = float(np.max(np.abs(X)))
    X = X / s
    _check_full_rank(X, rtol=0.0)
    gram = X.T @ X
    chol = np.linalg.cholesky(gram)
    ell = gram.shape[0]
    v = np.full(ell, 1.0 / np.sqrt(ell))
    lam = np.inf
    for _ in range(max_iters):
        w = np.linalg.solve(chol.T, np.linalg.solve(chol, v))
        v = w / np.linalg.norm(w)
        lam_new = float(v @ gram @ v)
        if abs(lam_new - lam) <= tol * lam_new:
            return lam_new * s * s
        lam = lam_new
    raise ConvergenceError("inverse iteration did not converge", iterate=v)
