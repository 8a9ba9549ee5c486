import numpy as np
import pytest

from tgslmm.core import (
    DataSet,
    DimensionMismatch,
    EffectMatrix,
    EmptyData,
    InvalidConfig,
    KinshipMatrix,
    NonFinite,
    SolverConfig,
    TgslmmError,
    validate_dataset,
)


def test_minimal_dataset_ok():
    ds = DataSet(X=np.arange(6.0).reshape(3, 2), Y=np.ones((3, 1)))
    validate_dataset(ds)
    assert (ds.n, ds.p, ds.k) == (3, 2, 1)
    assert len(ds.sample_ids) == 3


def test_row_mismatch():
    ds = DataSet(X=np.zeros((3, 2)), Y=np.zeros((4, 1)))
    with pytest.raises(DimensionMismatch, match="rows"):
        validate_dataset(ds)


def test_nan_in_x():
    X = np.zeros((3, 2))
    X[1, 1] = np.nan
    with pytest.raises(NonFinite, match="X"):
        validate_dataset(DataSet(X=X, Y=np.zeros((3, 1))))


@pytest.mark.parametrize("shape_x, shape_y", [((1, 2), (1, 1)), ((3, 0), (3, 1)), ((3, 2), (3, 0))])
def test_empty(shape_x, shape_y):
    with pytest.raises(EmptyData):
        validate_dataset(DataSet(X=np.zeros(shape_x), Y=np.zeros(shape_y)))


def test_id_length_mismatch():
    ds = DataSet(X=np.zeros((3, 2)), Y=np.zeros((3, 1)), sample_ids=["a", "b"])
    with pytest.raises(DimensionMismatch, match="sample_ids"):
        validate_dataset(ds)


def test_truth_shape_checked():
    ds = DataSet(X=np.zeros((3, 2)), Y=np.zeros((3, 1)), truth=EffectMatrix(np.zeros((3, 1))))
    with pytest.raises(DimensionMismatch, match="truth"):
        validate_dataset(ds)


def test_arrays_are_frozen():
    ds = DataSet(X=np.zeros((3, 2)), Y=np.zeros((3, 1)))
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_support_exact_zeros():
    em = EffectMatrix(np.array([[0.0, 1e-300], [-2.0, 0.0]]))
    np.testing.assert_array_equal(em.support(), [[False, True], [True, False]])


def test_kinship_must_be_symmetric():
    with pytest.raises(TgslmmError):
        KinshipMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))


@pytest.mark.parametrize("kwargs", [{"lam": -1.0}, {"mu": 0.0}, {"tol": 0.0}, {"max_iter": 0}, {"seed": -1}])
def test_solver_config_invariants(kwargs):
    with pytest.raises(InvalidConfig):
        SolverConfig(**kwargs)
