"""ROC/PR scoring of estimated effects against ground truth.

Entries ``(j, c)`` are ranked by ``|beta_hat|``; sweeping a threshold over
the distinct absolute values selects the entries above it.  An entry is a
positive when its true effect is nonzero.  Tied scores enter the curve as a
single step, so the trapezoidal AUC equals the Mann-Whitney statistic with
ties counted as one half.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from tgslmm.core import DegenerateTruth, DimensionMismatch, as_matrix

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class EvalReport:
    roc_points: list = field(default_factory=list)
    pr_points: list = field(default_factory=list)
    auc_roc: float = float("nan")
    auc_pr: float = float("nan")
    beta_mse: float = float("nan")
    pred_mse: float = float("nan")
    method: str = ""
    seed: int = 0
    per_response_auc: list | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["roc_points"] = [list(map(float, pt)) for pt in self.roc_points]
        out["pr_points"] = [list(map(float, pt)) for pt in self.pr_points]
        return out


def _values(m) -> np.ndarray:
    return as_matrix(getattr(m, "beta", m), "beta")


def _check_same(a: np.ndarray, b: np.ndarray, what: str = "estimate and truth") -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what} differ in shape: {a.shape} vs {b.shape}")


def _curve_counts(scores: np.ndarray, labels: np.ndarray):
    """Cumulative TP/FP counts at each distinct score, highest first."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    return tp[last], fp[last]


def roc_curve(estimate, truth) -> EvalReport:
    """ROC and PR points plus their areas for the pooled p*k entries."""
    est = _values(estimate)
    tru = _values(truth)
    _check_same(est, tru)
    return _roc_from_scores(np.abs(est).ravel(), tru.ravel() != 0.0)


def _roc_from_scores(scores: np.ndarray, labels: np.ndarray) -> EvalReport:
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTruth(
            f"truth needs both zero and nonzero entries (positives={n_pos}, negatives={n_neg})"
        )
    tp, fp = _curve_counts(scores, labels)
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    # trapezoid area in integer counts, divided once: exact rank statistic
    tp0 = np.r_[0, tp].astype(np.int64)
    fp0 = np.r_[0, fp].astype(np.int64)
    twice_area = int(np.sum(np.diff(fp0) * (tp0[1:] + tp0[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)

    recall = np.r_[0.0, tp / n_pos]
    precision = np.r_[1.0, tp / (tp + fp)]
    auc_pr = float(_trapezoid(precision, recall))
    return EvalReport(
        roc_points=list(zip(fpr.tolist(), tpr.tolist())),
        pr_points=list(zip(recall.tolist(), precision.tolist())),
        auc_roc=auc,
        auc_pr=auc_pr,
    )


def per_response_auc(estimate, truth) -> list:
    """AUC computed separately for each response; ``None`` where undefined."""
    est = _values(estimate)
    tru = _values(truth)
    _check_same(est, tru)
    out = []
    for c in range(est.shape[1]):
        labels = tru[:, c] != 0.0
        if labels.all() or not labels.any():
            out.append(None)
        else:
            out.append(_roc_from_scores(np.abs(est[:, c]), labels).auc_roc)
    return out


def beta_mse(estimate, truth) -> float:
    est = _values(estimate)
    tru = _values(truth)
    _check_same(est, tru)
    return float(np.mean((est - tru) ** 2))


def pred_mse(Y_hat, Y) -> float:
    a = as_matrix(Y_hat, "Y_hat")
    b = as_matrix(Y, "Y")
    _check_same(a, b, "Y_hat and Y")
    return float(np.mean((a - b) ** 2))


def evaluate(estimate, truth, *, Y_hat=None, Y=None, method: str = "", seed: int = 0,
             per_response: bool = False) -> EvalReport:
    """Full report: curves, AUCs, beta MSE and (when given) prediction MSE."""
    report = roc_curve(estimate, truth)
    report.beta_mse = beta_mse(estimate, truth)
    if Y_hat is not None and Y is not None:
        report.pred_mse = pred_mse(Y_hat, Y)
    report.method = method
    report.seed = int(seed)
    if per_response:
        report.per_response_auc = per_response_auc(estimate, truth)
    return report


def mean_roc(curves, grid_size: int = 101) -> tuple[np.ndarray, np.ndarray]:
    """Vertical average of ROC curves on a fixed FPR grid."""
    grid = np.linspace(0.0, 1.0, grid_size)
    rows = []
    for pts in curves:
        fpr, tpr = np.asarray(pts, dtype=float).T
        rows.append(np.interp(grid, fpr, tpr))
    return grid, np.mean(rows, axis=0)
