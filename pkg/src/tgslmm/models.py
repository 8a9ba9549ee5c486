"""The four compared pipelines: lasso, tree-lasso, LMM-lasso and TgSLMM.

=========== ======================== ==================
kind        confounder correction    response tree
=========== ======================== ==================
lasso       none                     k independent leaves
tree_lasso  none                     clustered from Y
lmm_lasso   null-model rotation      k independent leaves
tgslmm      null-model rotation      clustered from Y
=========== ======================== ==================

X and Y are centered column-wise; no intercept is fitted.  The penalty
strength is picked from a descending grid by the prediction error on a
held-out fifth of the (rotated) rows, then the model is refit on all rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from tgslmm.core import (
    DataSet,
    DimensionMismatch,
    EffectMatrix,
    InvalidConfig,
    KinshipMatrix,
    SolverConfig,
    as_matrix,
    validate_dataset,
)
from tgslmm.kinship import NullModelFit, fit_null_model, kinship_from_x, rotate
from tgslmm.solver import SolveResult, solve_tree_lasso
from tgslmm.tree import ResponseTree, cluster_responses, flat_tree

KINDS = ("lasso", "tree_lasso", "lmm_lasso", "tgslmm")
N_LAMBDA = 20
LAMBDA_RATIO = 100.0
HOLDOUT_FRACTION = 0.2


def normalize_kind(kind: str) -> str:
    k = kind.strip().lower().replace("-", "_")
    if k not in KINDS:
        raise InvalidConfig(f"unknown method {kind!r}; choose from {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class MethodSpec:
    """What to fit and how.

    ``lambda_grid=None`` builds ``n_lambda`` geometric points from
    ``lambda_max`` (the smallest penalty giving beta = 0 for the lasso) down
    by a factor ``lambda_ratio``.
    ``cluster_on`` chooses whether TgSLMM clusters the raw or rotated
    responses.
    """

    kind: str
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    tree_cut: float = 0.9
    lambda_grid: Optional[tuple] = None
    cluster_on: str = "raw"
    n_lambda: int = N_LAMBDA
    lambda_ratio: float = LAMBDA_RATIO

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if not grid:
                raise InvalidConfig("lambda_grid must not be empty")
            if any(v <= 0 for v in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
                raise InvalidConfig("lambda_grid must be positive and strictly descending")
            object.__setattr__(self, "lambda_grid", grid)
        if self.cluster_on not in ("raw", "rotated"):
            raise InvalidConfig(f"cluster_on must be 'raw' or 'rotated', got {self.cluster_on!r}")
        if self.n_lambda < 1 or self.lambda_ratio < 1.0:
            raise InvalidConfig("n_lambda must be >= 1 and lambda_ratio >= 1")
        if not 0.0 <= self.tree_cut <= 1.0:
            raise InvalidConfig(f"tree_cut must lie in [0, 1], got {self.tree_cut}")

    @property
    def uses_lmm(self) -> bool:
        return self.kind in ("lmm_lasso", "tgslmm")

    @property
    def uses_tree(self) -> bool:
        return self.kind in ("tree_lasso", "tgslmm")


@dataclass(frozen=True)
class FitResult:
    beta: EffectMatrix
    solve: SolveResult
    lam: float
    lambda_grid: tuple
    validation_mse: tuple
    tree: ResponseTree
    null_fit: Optional[NullModelFit] = None


def lambda_max(Xd, Yd) -> float:
    """Smallest penalty at which the all-leaf (lasso) solution is zero.

    Tree weights sum to one along every root-to-leaf path, so this is also
    the natural scale for tree penalties.
    """
    return float(np.abs(as_matrix(Xd).T @ as_matrix(Yd)).max())


def default_lambda_grid(Xd, Yd, n: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> tuple:
    top = lambda_max(Xd, Yd)
    if top <= 0:
        top = 1.0
    return tuple(np.geomspace(top, top / ratio, n).tolist())


def _center(A: np.ndarray) -> np.ndarray:
    return A - A.mean(axis=0)


def holdout_split(n: int, seed: int, fraction: float = HOLDOUT_FRACTION):
    rng = np.random.default_rng(int(seed))
    perm = rng.permutation(n)
    n_hold = min(max(1, int(round(fraction * n))), n - 1)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def select_lambda(Xd, Yd, tree: ResponseTree, grid, cfg: SolverConfig):
    """Validation MSE of each grid value on a seeded 80/20 row split."""
    train, hold = holdout_split(Xd.shape[0], cfg.seed)
    errors = []
    for lam in grid:
        res = solve_tree_lasso(Xd[train], Yd[train], tree, replace(cfg, lam=lam))
        resid = Yd[hold] - Xd[hold] @ res.beta.beta
        errors.append(float(np.mean(resid**2)))
    best = int(np.argmin(errors))
    return grid[best], tuple(errors)


def fit(
    ds: DataSet,
    spec: MethodSpec,
    *,
    kinship: Optional[KinshipMatrix] = None,
    tree: Optional[ResponseTree] = None,
) -> FitResult:
    """Run one pipeline end to end and return the selected fit.

    ``kinship`` replaces the estimate from X; ``tree`` replaces clustering.
    """
    validate_dataset(ds)
    X = _center(ds.X)
    Y = _center(ds.Y)

    null_fit = None
    Xd, Yd = X, Y
    if spec.uses_lmm:
        K = kinship if kinship is not None else kinship_from_x(ds.X)
        if K.n != ds.n:
            raise DimensionMismatch(f"kinship is {K.n}x{K.n} but data has {ds.n} samples")
        null_fit = fit_null_model(K, Y)
        rot = rotate(null_fit, X, Y)
        Xd, Yd = rot.X_tilde, rot.Y_tilde

    if tree is not None:
        if tree.k != ds.k:
            raise DimensionMismatch(f"tree has {tree.k} leaves but data has {ds.k} responses")
        used_tree = tree
    elif spec.uses_tree:
        source = Yd if spec.cluster_on == "rotated" else Y
        used_tree = cluster_responses(source, spec.tree_cut)
    else:
        used_tree = flat_tree(ds.k)

    grid = spec.lambda_grid
    if grid is None:
        grid = default_lambda_grid(Xd, Yd, spec.n_lambda, spec.lambda_ratio)
    if len(grid) == 1:
        lam, errors = grid[0], ()
    else:
        lam, errors = select_lambda(Xd, Yd, used_tree, grid, spec.solver_cfg)
    res = solve_tree_lasso(Xd, Yd, used_tree, replace(spec.solver_cfg, lam=lam))
    beta = EffectMatrix(res.beta.beta, ds.variable_ids, ds.response_ids)
    return FitResult(
        beta=beta,
        solve=res,
        lam=float(lam),
        lambda_grid=tuple(grid),
        validation_mse=errors,
        tree=used_tree,
        null_fit=null_fit,
    )


def predict(ds: DataSet, beta) -> np.ndarray:
    """Fixed-effect prediction ``X beta``."""
    B = as_matrix(getattr(beta, "beta", beta), "beta")
    if B.shape != (ds.p, ds.k):
        raise DimensionMismatch(f"beta has shape {B.shape}, expected ({ds.p}, {ds.k})")
    return ds.X @ B
