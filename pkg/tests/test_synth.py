import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from scipy.stats import kstest

from tgslmm.core import DimensionMismatch, InvalidConfig
from tgslmm.kinship import eigh_descending, kinship_from_x
from tgslmm.synth import (
    SynthConfig,
    column_partition,
    generate_beta,
    generate_responses,
    generate_x,
    simulate,
)

SCALED = dict(n=250, p=500, k=50, m=10)


def matched_accuracy(pred, truth):
    labels_p, labels_t = np.unique(pred), np.unique(truth)
    table = np.array([[np.sum((pred == a) & (truth == b)) for b in labels_t] for a in labels_p])
    rows, cols = linear_sum_assignment(-table)
    return table[rows, cols].sum() / len(truth)


class TestConfig:
    def test_table_defaults(self):
        cfg = SynthConfig()
        assert (cfg.n, cfg.p, cfg.k, cfg.m) == (1000, 5000, 50, 10)
        assert (cfg.density, cfg.sigma_e2, cfg.sigma_y2, cfg.sigma_eps2) == (0.05, 0.001, 1.0, 0.05)

    @pytest.mark.parametrize("kw", [{"n": 0}, {"density": 0.0}, {"density": 1.5}, {"k": 1},
                                    {"sigma_y2": -1.0}, {"base_effect": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfig):
            SynthConfig(**kw)

    def test_from_mapping(self):
        cfg = SynthConfig.from_mapping({"n": "12", "d": "0.5", "sigma_y2": "0", "unknown": "x"})
        assert cfg.n == 12 and cfg.density == 0.5 and cfg.sigma_y2 == 0.0
        assert SynthConfig.from_mapping(cfg.to_dict()) == cfg


class TestBeta:
    def test_depth_zero(self):
        cfg = SynthConfig(p=6, k=2, density=1.0, max_depth=0, base_effect=0.7)
        np.testing.assert_array_equal(generate_beta(cfg).beta, np.full((6, 2), 0.7))

    @pytest.mark.parametrize("seed", range(3))
    def test_active_row_fraction(self, seed):
        cfg = SynthConfig(p=333, k=7, density=0.07, seed=seed)
        active = np.any(generate_beta(cfg).beta != 0, axis=1)
        assert active.sum() == round(0.07 * 333)

    def test_at_least_one_active_row(self):
        B = generate_beta(SynthConfig(n=10, p=5, k=2, m=1)).beta
        assert np.count_nonzero(B.any(axis=1)) == 1

    def test_partition(self):
        widths, depth = column_partition(8)
        assert widths == [8, 4, 2, 1]
        np.testing.assert_array_equal(depth, [0, 0, 0, 0, 1, 1, 2, 3])

    def test_column_rules_default(self):
        cfg = SynthConfig()
        for seed in range(20):
            B = generate_beta(SynthConfig(**{**cfg.to_dict(), "seed": seed})).beta
            active = np.any(B != 0, axis=1)
            assert np.all(B[active, 0] != 0)
            means = [np.abs(B[B[:, c] != 0, c]).mean() if np.any(B[:, c]) else 0.0 for c in range(cfg.k)]
            assert int(np.argmax(means)) == cfg.k - 1 or means[-1] == max(means)

    def test_laminar(self):
        B = generate_beta(SynthConfig(p=400, k=13, density=0.2, seed=4)).beta
        supports = [frozenset(np.flatnonzero(r)) for r in B if np.any(r)]
        for a in set(supports):
            for b in set(supports):
                assert a <= b or b <= a or not (a & b)

    def test_has_full_rows(self):
        B = generate_beta(SynthConfig(p=400, k=13, density=0.2, seed=4)).beta
        assert np.any(np.all(B != 0, axis=1))

    def test_deeper_rows_dominate(self):
        B = generate_beta(SynthConfig(p=2000, k=16, density=0.5, seed=1)).beta
        widths = np.count_nonzero(B, axis=1)
        counts = [np.sum(widths == w) for w in (16, 8, 4, 2, 1)]
        assert counts[-1] > counts[1]


class TestX:
    def test_no_noise_equals_centroid(self):
        X, C, labels = generate_x(SynthConfig(n=9, p=4, m=3, sigma_e2=0.0, density=0.5))
        np.testing.assert_array_equal(X, C[labels])
        np.testing.assert_array_equal(labels, np.arange(9) % 3)

    def test_single_group_rank_one(self):
        out = simulate(SynthConfig(n=12, p=20, k=3, m=1, density=0.1))
        assert np.linalg.matrix_rank(out.kinship_truth) == 1

    def test_distance_concentration(self):
        cfg = SynthConfig(n=40, m=4)
        X, _, labels = generate_x(cfg)
        D = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        same = labels[:, None] == labels[None, :]
        off = ~np.eye(cfg.n, dtype=bool)
        within, between = D[same & off], D[~same]
        assert within.mean() == pytest.approx(2 * cfg.sigma_e2 * cfg.p, rel=0.1)
        assert between.mean() == pytest.approx(2 * cfg.p * (1 + cfg.sigma_e2), rel=0.1)
        assert between.min() - within.max() > 10 * between.std()

    def test_group_recovery_from_kinship(self):
        out = simulate(SynthConfig(**SCALED, seed=1))
        U, _ = eigh_descending(kinship_from_x(out.dataset.X))
        Z = U[:, : SCALED["m"]]
        pred = fcluster(linkage(Z, method="average"), SCALED["m"], criterion="maxclust")
        assert matched_accuracy(pred, out.group_labels) >= 0.9


class TestResponses:
    def test_noiseless(self):
        cfg = SynthConfig(n=15, p=10, k=3, m=2, density=0.3, sigma_y2=0.0, sigma_eps2=0.0)
        out = simulate(cfg)
        np.testing.assert_array_equal(out.dataset.Y, out.dataset.X @ out.dataset.truth.beta)

    def test_residual_distribution(self):
        cfg = SynthConfig(n=200, p=50, k=20, m=4, density=0.1, sigma_y2=0.0, seed=3)
        ds = simulate(cfg).dataset
        resid = (ds.Y - ds.X @ ds.truth.beta).ravel()
        assert kstest(resid, "norm", args=(0, np.sqrt(cfg.sigma_eps2))).pvalue > 0.01

    def test_group_correlated_noise(self):
        for seed in range(5):
            out = simulate(SynthConfig(n=60, p=200, k=50, m=3, density=0.05, seed=seed))
            ds = out.dataset
            R = ds.Y - ds.X @ ds.truth.beta
            corr = np.corrcoef(R)
            lab = out.group_labels
            same = (lab[:, None] == lab[None, :]) & ~np.eye(len(lab), dtype=bool)
            assert corr[same].mean() > corr[lab[:, None] != lab[None, :]].mean()

    def test_shape_mismatch(self):
        cfg = SynthConfig(n=5, p=4, k=2, m=1, density=0.5)
        X, C, labels = generate_x(cfg)
        with pytest.raises(DimensionMismatch):
            generate_responses(cfg, X, C, labels, np.zeros((3, 2)))


class TestSimulate:
    def test_reproducible(self):
        cfg = SynthConfig(n=30, p=40, k=5, m=3, density=0.1, seed=11)
        a, b = simulate(cfg), simulate(cfg)
        for name in ("X", "Y"):
            assert getattr(a.dataset, name).tobytes() == getattr(b.dataset, name).tobytes()
        assert a.dataset.truth.beta.tobytes() == b.dataset.truth.beta.tobytes()
        assert a.centroids.tobytes() == b.centroids.tobytes()

    def test_seed_changes_output(self):
        a = simulate(SynthConfig(n=30, p=40, k=5, m=3, density=0.1, seed=1))
        b = simulate(SynthConfig(n=30, p=40, k=5, m=3, density=0.1, seed=2))
        assert not np.array_equal(a.dataset.Y, b.dataset.Y)

    def test_components_match_full_pipeline(self):
        cfg = SynthConfig(n=30, p=40, k=5, m=3, density=0.1, seed=5)
        out = simulate(cfg)
        np.testing.assert_array_equal(generate_beta(cfg).beta, out.dataset.truth.beta)
        np.testing.assert_array_equal(generate_x(cfg)[0], out.dataset.X)
        Y = generate_responses(cfg, out.dataset.X, out.centroids, out.group_labels, out.dataset.truth)
        np.testing.assert_array_equal(Y, out.dataset.Y)

    def test_kinship_truth(self):
        out = simulate(SynthConfig(n=8, p=6, k=2, m=2, density=0.5))
        SC = out.centroids[out.group_labels]
        np.testing.assert_allclose(out.kinship_truth, SC @ SC.T)
        assert out.dataset.truth is not None
