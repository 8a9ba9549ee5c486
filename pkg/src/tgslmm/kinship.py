"""Kinship estimation, null-model variance components and data rotation.

The null model ignores fixed effects::

    y_c ~ N(0, sigma_g2 * (K + delta * I)),   c = 1..k

With ``K = U diag(d) U^T`` the likelihood only depends on the rotated
responses ``U^T Y`` and the eigenvalues, so a single scalar ``delta`` is
profiled (``sigma_g2`` has a closed form for fixed ``delta``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tgslmm.core import (
    DegenerateResponses,
    DimensionMismatch,
    EigenFailure,
    EmptyData,
    KinshipMatrix,
    NonFinite,
    as_matrix,
)

DELTA_MIN = 1e-5
DELTA_MAX = 1e5
N_GRID = 100
REFINE_RTOL = 1e-6
EIG_CLAMP = 1e-10

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NullModelFit:
    U: np.ndarray
    eigvals: np.ndarray
    delta: float
    sigma_g2: float
    loglik: float

    @property
    def sigma_e2(self) -> float:
        return self.delta * self.sigma_g2

    @property
    def n(self) -> int:
        return self.U.shape[0]


@dataclass(frozen=True)
class RotatedData:
    X_tilde: np.ndarray
    Y_tilde: np.ndarray
    source_fit: NullModelFit


def kinship_from_x(X) -> KinshipMatrix:
    """Realized-relationship kinship ``Xs Xs^T / p``.

    Columns of ``X`` are standardized to mean 0 and variance 1; constant
    columns contribute nothing.
    """
    X = as_matrix(X, "X")
    n, p = X.shape
    if n < 1 or p < 1:
        raise EmptyData(f"X: cannot build kinship from shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("X contains NaN or Inf")
    Xs = X - X.mean(axis=0)
    sd = Xs.std(axis=0)
    live = sd > 0
    Xs[:, live] /= sd[live]
    Xs[:, ~live] = 0.0
    K = Xs @ Xs.T / p
    K = 0.5 * (K + K.T)
    return KinshipMatrix(K)


def eigh_descending(K) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a PSD matrix; eigenvalues descending and clamped.

    Eigenvalues below ``1e-10 * max`` (including small negative round-off)
    are set to exactly 0.
    """
    K = np.asarray(K.K if isinstance(K, KinshipMatrix) else K, dtype=np.float64)
    try:
        d, U = np.linalg.eigh(K)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition of K failed: {exc}") from exc
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(U))):
        raise EigenFailure("eigendecomposition of K produced non-finite values")
    order = np.argsort(-d, kind="stable")
    d, U = d[order], U[:, order]
    top = max(d[0], 0.0)
    d = np.where(d < EIG_CLAMP * top, 0.0, d)
    return U, d


def sigma_g2_at(delta: float, eigvals, Y_rot) -> float:
    """Closed-form maximizer of the likelihood in ``sigma_g2`` at fixed ``delta``."""
    Y_rot = as_matrix(Y_rot, "Y_rot")
    n, k = Y_rot.shape
    s = np.sum(Y_rot**2 / (np.asarray(eigvals)[:, None] + delta))
    return float(s / (n * k))


def loglik(delta: float, sigma_g2: float, eigvals, Y_rot) -> float:
    """Null log-likelihood summed over the response columns."""
    Y_rot = as_matrix(Y_rot, "Y_rot")
    n, k = Y_rot.shape
    dd = np.asarray(eigvals) + delta
    quad = np.sum(Y_rot**2 / dd[:, None])
    return float(
        -0.5 * (k * n * math.log(2 * math.pi * sigma_g2) + k * np.sum(np.log(dd)) + quad / sigma_g2)
    )


def profiled_loglik(delta: float, eigvals, Y_rot) -> float:
    """Log-likelihood with ``sigma_g2`` replaced by its closed form."""
    return loglik(delta, sigma_g2_at(delta, eigvals, Y_rot), eigvals, Y_rot)


def _golden_max(f, a: float, b: float, rtol: float) -> float:
    # maximize f on [a, b] over log10(delta)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * max(abs(a), abs(b), 1.0):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return c if fc >= fd else d


def fit_null_model(K, Y) -> NullModelFit:
    """Fit ``(delta, sigma_g2)`` of the null model by grid search plus refinement.

    ``delta`` is searched on 100 log-spaced points in ``[1e-5, 1e5]``; the
    best bracketing interval is then refined by golden-section search on
    ``log10(delta)``.  One ``delta`` is shared by all response columns.
    """
    if not isinstance(K, KinshipMatrix):
        K = KinshipMatrix(K)
    Y = as_matrix(Y, "Y")
    if K.n != Y.shape[0]:
        raise DimensionMismatch(f"K is {K.n}x{K.n} but Y has {Y.shape[0]} rows")
    if not np.all(np.isfinite(Y)):
        raise NonFinite("Y contains NaN or Inf")
    if np.ptp(Y) == 0.0:
        raise DegenerateResponses("all Y entries are equal; sigma_g2 is not identifiable")
    U, d = eigh_descending(K)
    Y_rot = U.T @ Y
    if not np.any(Y_rot):
        raise DegenerateResponses("rotated responses are identically zero")

    def f(log_delta: float) -> float:
        return profiled_loglik(10.0**log_delta, d, Y_rot)

    grid = np.linspace(math.log10(DELTA_MIN), math.log10(DELTA_MAX), N_GRID)
    values = np.array([f(g) for g in grid])
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, N_GRID - 1)]
    # rtol is on delta itself; in log10 units that is rtol / ln(10)
    best = _golden_max(f, lo, hi, REFINE_RTOL / math.log(10.0))
    if f(best) < values[i]:
        best = grid[i]
    delta = float(np.clip(10.0**best, DELTA_MIN, DELTA_MAX))
    s2 = sigma_g2_at(delta, d, Y_rot)
    return NullModelFit(U=U, eigvals=d, delta=delta, sigma_g2=s2, loglik=loglik(delta, s2, d, Y_rot))


def rotate(fit: NullModelFit, X, Y) -> RotatedData:
    """Whiten ``X`` and ``Y``: ``(diag(d) + delta I)^{-1/2} U^T [X, Y]``."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    n = fit.n
    if X.shape[0] != n or Y.shape[0] != n:
        raise DimensionMismatch(
            f"fit has n={n} but X has {X.shape[0]} rows and Y has {Y.shape[0]}"
        )
    scale = 1.0 / np.sqrt(fit.eigvals + fit.delta)
    Xt = scale[:, None] * (fit.U.T @ X)
    Yt = scale[:, None] * (fit.U.T @ Y)
    return RotatedData(X_tilde=Xt, Y_tilde=Yt, source_fit=fit)
