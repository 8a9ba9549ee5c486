"""Shared domain types, error classes and numeric conventions.

All matrices are dense ``float64`` numpy arrays.  Containers freeze their
arrays (``writeable=False``) so they can be shared read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class TgslmmError(ValueError):
    """Base class for every data/config error raised by this package."""


class DimensionMismatch(TgslmmError):
    pass


class NonFinite(TgslmmError):
    pass


class EmptyData(TgslmmError):
    pass


class DegenerateResponses(TgslmmError):
    pass


class EigenFailure(TgslmmError):
    pass


class MissingHeight(TgslmmError):
    pass


class InvalidConfig(TgslmmError):
    pass


class DegenerateTruth(TgslmmError):
    pass


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Return ``a`` as a 2-D float64 array (1-D input becomes a column)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _frozen(a, name: str) -> np.ndarray:
    arr = np.array(as_matrix(a, name), dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def default_ids(prefix: str, n: int) -> list[str]:
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


@dataclass(frozen=True)
class EffectMatrix:
    """p x k effect sizes with variable and response labels."""

    beta: np.ndarray
    variable_ids: Sequence[str] = ()
    response_ids: Sequence[str] = ()

    def __post_init__(self):
        beta = _frozen(self.beta, "beta")
        object.__setattr__(self, "beta", beta)
        p, k = beta.shape
        vids = list(self.variable_ids) or default_ids("v", p)
        rids = list(self.response_ids) or default_ids("y", k)
        if len(vids) != p:
            raise DimensionMismatch(f"variable_ids has {len(vids)} entries, beta has {p} rows")
        if len(rids) != k:
            raise DimensionMismatch(f"response_ids has {len(rids)} entries, beta has {k} columns")
        object.__setattr__(self, "variable_ids", tuple(vids))
        object.__setattr__(self, "response_ids", tuple(rids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.beta.shape

    def support(self) -> np.ndarray:
        """Boolean mask of exactly nonzero entries."""
        return self.beta != 0.0


@dataclass(frozen=True)
class DataSet:
    """Explanatory matrix ``X`` (n x p), responses ``Y`` (n x k) and labels.

    Construction does not validate; call :func:`validate_dataset`.
    """

    X: np.ndarray
    Y: np.ndarray
    sample_ids: Sequence[str] = ()
    variable_ids: Sequence[str] = ()
    response_ids: Sequence[str] = ()
    truth: Optional[EffectMatrix] = None

    def __post_init__(self):
        X = _frozen(self.X, "X")
        Y = _frozen(self.Y, "Y")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids) or tuple(default_ids("s", X.shape[0])))
        object.__setattr__(self, "variable_ids", tuple(self.variable_ids) or tuple(default_ids("v", X.shape[1])))
        object.__setattr__(self, "response_ids", tuple(self.response_ids) or tuple(default_ids("y", Y.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class KinshipMatrix:
    """Symmetric positive semi-definite n x n sample covariance."""

    K: np.ndarray

    def __post_init__(self):
        K = _frozen(self.K, "K")
        if K.shape[0] != K.shape[1]:
            raise DimensionMismatch(f"K must be square, got {K.shape}")
        if not np.all(np.isfinite(K)):
            raise NonFinite("K contains NaN or Inf")
        scale = max(np.abs(K).max(), 1.0)
        if np.abs(K - K.T).max() > 1e-10 * scale:
            raise TgslmmError("K is not symmetric")
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    """Penalty strength and iteration control for the tree-lasso solver.

    ``mu=None`` selects the smoothing level automatically: ``1e-4`` times the
    objective at beta = 0, divided by the number of smoothed (row, group)
    terms, so the total smoothing error stays a fixed fraction of the
    objective scale.
    """

    lam: float = 0.0
    mu: Optional[float] = None
    max_iter: int = 5000
    tol: float = 1e-8
    seed: int = 0
    power_iters: int = 20

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidConfig(f"lambda must be >= 0, got {self.lam}")
        if self.mu is not None and not (self.mu > 0 and np.isfinite(self.mu)):
            raise InvalidConfig(f"mu must be > 0, got {self.mu}")
        if not self.tol > 0:
            raise InvalidConfig(f"tol must be > 0, got {self.tol}")
        if int(self.max_iter) < 1:
            raise InvalidConfig(f"max_iter must be positive, got {self.max_iter}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig(f"seed must fit in 64 unsigned bits, got {self.seed}")


def validate_dataset(ds: DataSet) -> None:
    """Raise if ``ds`` violates any :class:`DataSet` invariant."""
    X, Y = ds.X, ds.Y
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if X.shape[0] < 2:
        raise EmptyData(f"X: need at least 2 samples, got {X.shape[0]}")
    if X.shape[1] < 1:
        raise EmptyData("X: need at least one explanatory variable")
    if Y.shape[1] < 1:
        raise EmptyData("Y: need at least one response")
    for name, arr in (("X", X), ("Y", Y)):
        if not np.all(np.isfinite(arr)):
            raise NonFinite(f"{name} contains NaN or Inf")
    for name, ids, dim in (
        ("sample_ids", ds.sample_ids, X.shape[0]),
        ("variable_ids", ds.variable_ids, X.shape[1]),
        ("response_ids", ds.response_ids, Y.shape[1]),
    ):
        if len(ids) != dim:
            raise DimensionMismatch(f"{name} has {len(ids)} entries, expected {dim}")
    if ds.truth is not None:
        if ds.truth.shape != (X.shape[1], Y.shape[1]):
            raise DimensionMismatch(
                f"truth: beta shape {ds.truth.shape} != ({X.shape[1]}, {Y.shape[1]})"
            )
        if not np.all(np.isfinite(ds.truth.beta)):
            raise NonFinite("truth contains NaN or Inf")
