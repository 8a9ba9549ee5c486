"""Synthetic confounded data with tree-structured ground-truth effects.

Generation follows the benchmark protocol:

1. a sparse p x k effect matrix whose row supports are nested column
   prefixes (column 0 is active in every active row, columns further right
   are active in fewer rows but carry larger values),
2. m centroids ``c_j ~ N(0, I_p)`` and samples ``x_i ~ N(c_j, sigma_e2 I)``,
3. ``r = X beta + eps`` with ``eps ~ N(0, sigma_eps2)`` entrywise,
4. ``y_c ~ N(r_c, sigma_y2 * S C C^T S^T)`` where ``S`` selects each
   sample's centroid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from tgslmm.core import DataSet, DimensionMismatch, EffectMatrix, InvalidConfig, default_ids


@dataclass(frozen=True)
class SynthConfig:
    n: int = 1000
    p: int = 5000
    k: int = 50
    m: int = 10
    density: float = 0.05
    sigma_e2: float = 0.001
    sigma_y2: float = 1.0
    sigma_eps2: float = 0.05
    base_effect: float = 0.3
    seed: int = 0
    # caps the depth of the column partition used for supports and values
    max_depth: Optional[int] = None
    depth_bias: float = 2.0

    def __post_init__(self):
        for name in ("n", "p", "k", "m"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not 0.0 < self.density <= 1.0:
            raise InvalidConfig(f"density must lie in (0, 1], got {self.density}")
        if int(self.k) < 2:
            raise InvalidConfig(f"k must be at least 2 for a response hierarchy, got {self.k}")
        for name in ("sigma_e2", "sigma_y2", "sigma_eps2"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if not self.base_effect > 0:
            raise InvalidConfig("base_effect must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfig("max_depth must be >= 0")
        if self.depth_bias <= 0:
            raise InvalidConfig("depth_bias must be positive")

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if key == "d":
                key = "density"
            if key not in known:
                continue
            if key in ("n", "p", "k", "m", "seed"):
                kwargs[key] = int(val)
            elif key == "max_depth":
                kwargs[key] = None if val in (None, "", "none", "None") else int(val)
            else:
                kwargs[key] = float(val)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SynthOutput:
    dataset: DataSet
    centroids: np.ndarray
    group_labels: np.ndarray
    kinship_truth: np.ndarray
    config: SynthConfig


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("beta", "x", "eps", "y")
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {name: np.random.default_rng(s) for name, s in zip(names, children)}


def _split(lo: int, hi: int) -> int:
    return lo + (hi - lo + 1) // 2


def column_partition(k: int, max_depth: Optional[int] = None):
    """Prefix widths and column value depths of the balanced binary partition.

    Returns ``(widths, value_depth)``: ``widths[t]`` is the size of the
    leftmost block at depth ``t``; ``value_depth[c]`` is the depth of the
    deepest rightmost block that contains column ``c``.
    """
    widths = [k]
    lo, hi = 0, k
    while hi - lo > 1 and (max_depth is None or len(widths) <= max_depth):
        hi = _split(lo, hi)
        widths.append(hi - lo)
    value_depth = np.zeros(k, dtype=int)
    lo, hi, t = 0, k, 0
    while hi - lo > 1 and (max_depth is None or t < max_depth):
        lo = _split(lo, hi)
        t += 1
        value_depth[lo:hi] = t
    return widths, value_depth


def generate_beta(cfg: SynthConfig, rng: Optional[np.random.Generator] = None) -> EffectMatrix:
    """Sparse effects with nested row supports.

    ``round(density * p)`` rows are active, and never fewer than one.  Row supports are prefixes of the
    balanced column partition: a row at depth ``t`` is active on the leftmost
    depth-``t`` block.  At least one row is fully active; the remaining depths
    are drawn with probability proportional to ``depth_bias ** t``.  A
    nonzero entry in column ``c`` equals ``base_effect * 2**u(c)`` where
    ``u(c)`` grows toward the right edge.
    """
    rng = rng if rng is not None else _streams(cfg.seed)["beta"]
    p, k = cfg.p, cfg.k
    n_active = max(1, int(round(cfg.density * p)))
    widths, value_depth = column_partition(k, cfg.max_depth)
    T = len(widths) - 1

    rows = np.sort(rng.choice(p, size=n_active, replace=False))
    depth = np.zeros(n_active, dtype=int)
    if T > 0:
        n_full = max(1, int(round(n_active / (T + 1))))
        probs = cfg.depth_bias ** np.arange(1, T + 1)
        probs /= probs.sum()
        rest = rng.permutation(n_active)[n_full:]
        depth[rest] = rng.choice(np.arange(1, T + 1), size=rest.size, p=probs)

    col_value = cfg.base_effect * 2.0 ** value_depth
    beta = np.zeros((p, k))
    for row, t in zip(rows, depth):
        w = widths[t]
        beta[row, :w] = col_value[:w]
    return EffectMatrix(beta, default_ids("v", p), default_ids("y", k))


def generate_x(cfg: SynthConfig, rng: Optional[np.random.Generator] = None):
    """Return ``(X, C, labels)``; sample ``i`` belongs to group ``i mod m``."""
    rng = rng if rng is not None else _streams(cfg.seed)["x"]
    C = rng.standard_normal((cfg.m, cfg.p))
    labels = np.arange(cfg.n) % cfg.m
    X = C[labels] + np.sqrt(cfg.sigma_e2) * rng.standard_normal((cfg.n, cfg.p))
    return X, C, labels


def generate_responses(cfg: SynthConfig, X, C, labels, beta, rng_eps=None, rng_y=None) -> np.ndarray:
    """``Y = X beta + eps + sigma_y * S C Z`` with ``Z`` standard normal.

    ``S C Z`` has column covariance ``S C C^T S^T``.
    """
    streams = _streams(cfg.seed) if rng_eps is None or rng_y is None else None
    rng_eps = rng_eps if rng_eps is not None else streams["eps"]
    rng_y = rng_y if rng_y is not None else streams["y"]
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(getattr(beta, "beta", beta), dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    labels = np.asarray(labels)
    if X.shape[1] != B.shape[0] or C.shape[1] != X.shape[1] or labels.shape[0] != X.shape[0]:
        raise DimensionMismatch(
            f"X {X.shape}, beta {B.shape}, C {C.shape}, labels {labels.shape} are inconsistent"
        )
    n, k = X.shape[0], B.shape[1]
    eps = np.sqrt(cfg.sigma_eps2) * rng_eps.standard_normal((n, k))
    Z = rng_y.standard_normal((C.shape[1], k))
    confound = np.sqrt(cfg.sigma_y2) * (C @ Z)[labels]
    return X @ B + eps + confound


def simulate(cfg: SynthConfig) -> SynthOutput:
    """Generate a full dataset bundle; bit-identical for identical ``cfg``."""
    rngs = _streams(cfg.seed)
    truth = generate_beta(cfg, rngs["beta"])
    X, C, labels = generate_x(cfg, rngs["x"])
    Y = generate_responses(cfg, X, C, labels, truth, rngs["eps"], rngs["y"])
    SC = C[labels]
    ds = DataSet(
        X=X,
        Y=Y,
        sample_ids=default_ids("s", cfg.n),
        variable_ids=truth.variable_ids,
        response_ids=truth.response_ids,
        truth=truth,
    )
    return SynthOutput(
        dataset=ds,
        centroids=C,
        group_labels=labels,
        kinship_truth=SC @ SC.T,
        config=cfg,
    )
