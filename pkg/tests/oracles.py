"""Independent reference implementations used only by the tests."""

import numpy as np
from scipy.stats import multivariate_normal


def cd_lasso(X, y, lam_weights, n_sweeps=20000, tol=1e-14):
    """Cyclic coordinate descent for 0.5*||y - X b||^2 + sum_j lam_j |b_j|.

    Stops once a full sweep moves no coefficient by more than ``tol`` times
    the largest coefficient magnitude.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float).ravel()
    lam_weights = np.broadcast_to(np.asarray(lam_weights, float), (X.shape[1],))
    b = np.zeros(X.shape[1])
    col_sq = (X**2).sum(axis=0)
    r = y.copy()
    for _ in range(n_sweeps):
        max_delta = 0.0
        for j in range(X.shape[1]):
            if col_sq[j] == 0:
                continue
            old = b[j]
            rho = X[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam_weights[j], 0.0) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                b[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta <= tol * np.abs(b).max():
            break
    return b


def lasso_objective(X, Y, B, lam):
    R = Y - X @ B
    return 0.5 * np.sum(R * R) + lam * np.sum(np.abs(B))


def group_lasso_rows(X, Y, lam, n_iter=200000, tol=1e-15):
    """Exact proximal gradient for 0.5*||Y - X B||_F^2 + lam * sum_j ||B[j, :]||_2."""
    L = np.linalg.norm(X, 2) ** 2
    B = np.zeros((X.shape[1], Y.shape[1]))
    prev = np.inf
    for _ in range(n_iter):
        G = X.T @ (X @ B - Y)
        V = B - G / L
        norms = np.linalg.norm(V, axis=1, keepdims=True)
        shrink = np.maximum(0.0, 1.0 - (lam / L) / np.maximum(norms, 1e-300))
        B = V * shrink
        obj = group_lasso_objective(X, Y, B, lam)
        if abs(prev - obj) <= tol * abs(obj):
            break
        prev = obj
    return B


def group_lasso_objective(X, Y, B, lam):
    R = Y - X @ B
    return 0.5 * np.sum(R * R) + lam * np.sum(np.linalg.norm(B, axis=1))


def mann_whitney_auc(scores, labels):
    """P(random positive outranks random negative), ties counted 1/2."""
    scores = np.asarray(scores, float).ravel()
    labels = np.asarray(labels, bool).ravel()
    pos = scores[labels]
    neg = scores[~labels]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def dense_null_loglik(K, Y, delta, sigma_g2):
    """Sum over columns of log N(y_c | 0, sigma_g2 (K + delta I)) via a dense solve."""
    n = K.shape[0]
    cov = sigma_g2 * (K + delta * np.eye(n))
    mvn = multivariate_normal(mean=np.zeros(n), cov=cov, allow_singular=False)
    return float(sum(mvn.logpdf(Y[:, c]) for c in range(Y.shape[1])))


def smoothed_group_value(b, weight, mu):
    """max_{||a||<=1} weight * a.b - mu/2 ||a||^2, by direct evaluation."""
    a = weight * np.asarray(b, float) / mu
    nrm = np.linalg.norm(a)
    if nrm > 1:
        a = a / nrm
    return float(weight * a @ b - 0.5 * mu * a @ a)


def random_tree_records(rng, k):
    """Random tree over k leaves with random arity (2-3) and random heights."""
    records = [{"id": c, "children": [], "response": c} for c in range(k)]
    pool = list(range(k))
    rng.shuffle(pool)
    while len(pool) > 1:
        arity = min(len(pool), int(rng.integers(2, 4)))
        kids = [pool.pop() for _ in range(arity)]
        new_id = len(records)
        records.append({"id": new_id, "children": kids, "h": float(rng.uniform())})
        pool.insert(int(rng.integers(0, len(pool) + 1)), new_id)
    return records, [pool[0]]


def tree_prox_rows(V, groups, step):
    """Exact prox of ``sum_g w_g ||v[g]||`` for a nested (tree) family.

    ``groups`` is a list of (column index list, weight).  For tree-structured
    groups the prox is the composition of single-group shrinkages applied
    from the smallest groups to the largest.
    """
    V = V.copy()
    for cols, w in sorted(groups, key=lambda gw: len(gw[0])):
        if w == 0:
            continue
        sub = V[:, cols]
        norms = np.linalg.norm(sub, axis=1, keepdims=True)
        V[:, cols] = sub * np.maximum(0.0, 1.0 - step * w / np.maximum(norms, 1e-300))
    return V


def tree_lasso_exact(X, Y, groups, n_iter=200000, tol=1e-16):
    """FISTA with the exact tree prox and restart on objective increase."""
    L = np.linalg.norm(X, 2) ** 2
    B = np.zeros((X.shape[1], Y.shape[1]))
    Z, t = B, 1.0

    def obj(M):
        R = Y - X @ M
        return 0.5 * np.sum(R * R) + sum(w * np.linalg.norm(M[:, c], axis=1).sum() for c, w in groups)

    f = obj(B)
    restarted = True
    for _ in range(n_iter):
        new = tree_prox_rows(Z - X.T @ (X @ Z - Y) / L, groups, 1.0 / L)
        f_new = obj(new)
        if f_new > f:
            if restarted:
                break  # a plain prox step from B no longer decreases: round-off floor
            Z, t, restarted = B, 1.0, True
            continue
        restarted = t == 1.0
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        Z = new + (t - 1) / t_new * (new - B)
        done = f - f_new <= tol * abs(f_new)
        B, f, t = new, f_new, t_new
        if done:
            break
    return B, f
