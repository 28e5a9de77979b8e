import math

import numpy as np
import pytest

from plrsmn.core import (
    CensoredObservation, DatasetValidationError, Family, FitResult, ModelError, SmnModel,
    dataset_from_arrays, validate_dataset,
)

inf = math.inf


def codes(exc):
    return [(v.row, v.code) for v in exc.value.violations]


def test_inverted_interval_reported_at_row():
    rows = [CensoredObservation.exact(1.0, (0.0,), 0.1), CensoredObservation.interval(2.0, 1.0, (0.0,), 0.2)]
    with pytest.raises(DatasetValidationError) as exc:
        validate_dataset(rows)
    assert codes(exc) == [(1, "InvertedInterval")]


def test_exact_row_accepted():
    ds = validate_dataset([CensoredObservation.exact(3.2, (1.0, 0.5), 0.1)])
    assert ds.n == 1 and ds.p == 2
    assert ds.lower[0] == ds.upper[0] == 3.2
    assert not ds.censored[0]


def test_doubly_infinite_rejected():
    with pytest.raises(DatasetValidationError) as exc:
        validate_dataset([CensoredObservation.interval(-inf, inf, (1.0,), 0.0)])
    assert codes(exc) == [(0, "DoublyInfiniteInterval")]


def test_all_violations_collected():
    rows = [
        CensoredObservation.exact(math.nan, (1.0,), 0.0),
        CensoredObservation.exact(1.0, (1.0, 2.0), 0.0),
        CensoredObservation.interval(1.0, 1.0, (1.0,), 0.0),
        CensoredObservation.exact(1.0, (math.inf,), 0.0),
    ]
    with pytest.raises(DatasetValidationError) as exc:
        validate_dataset(rows)
    assert codes(exc) == [(0, "NonFiniteValue"), (1, "RaggedCovariates"), (2, "InvertedInterval"),
                          (3, "NonFiniteValue")]


def test_half_infinite_intervals_ok():
    ds = validate_dataset([CensoredObservation.interval(-inf, 0.0, (1.0,), 0.0),
                           CensoredObservation.interval(2.0, inf, (1.0,), 1.0),
                           CensoredObservation.exact(1.0, (1.0,), 0.5)])
    assert ds.censored.tolist() == [True, True, False]
    assert ds.censoring_proportion == 2 / 3
    assert np.isnan(ds.y[:2]).all() and ds.y[2] == 1.0


def test_from_arrays_matches_row_validation():
    lo = np.array([1.0, 2.0, -inf])
    hi = np.array([1.0, 1.0, inf])
    with pytest.raises(DatasetValidationError) as exc:
        dataset_from_arrays(lo, hi, [False, True, True], np.ones((3, 1)), [0, 1, 2])
    assert codes(exc) == [(1, "InvertedInterval"), (2, "DoublyInfiniteInterval")]


def test_intercept_column_required():
    with pytest.raises(DatasetValidationError):
        dataset_from_arrays([1.0], [1.0], [False], [[2.0]], [0.0], intercept=True)


def test_dataset_immutable_and_subset():
    ds = dataset_from_arrays([1.0, 2.0, 3.0], [1.0, 2.5, 3.0], [False, True, False], np.eye(3), [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        ds.lower[0] = 5.0
    sub = ds.subset([2, 1])
    assert sub.lower.tolist() == [3.0, 2.0] and sub.censored.tolist() == [False, True]
    assert [o.censored for o in ds.observations()] == [False, True, False]


def test_smn_model_invariants():
    SmnModel.normal()
    SmnModel.student_t(0.5)
    SmnModel.contaminated(0.1, 0.9)
    for bad in (lambda: SmnModel.student_t(0.0), lambda: SmnModel.slash(-1.0),
                lambda: SmnModel.contaminated(1.0, 0.5), lambda: SmnModel.contaminated(0.5, 1.0),
                lambda: SmnModel(Family.N, 1.0), lambda: SmnModel(Family.T, 3.0, 0.5)):
        with pytest.raises(ModelError):
            bad()
    assert SmnModel.student_t(3).with_params(nu=5).nu == 5
    assert Family.CN.n_mixing == 2 and Family.N.n_mixing == 0


def test_fit_result_accessors():
    from plrsmn.bspline import SplineBasis

    basis = SplineBasis(3, np.array([0.5]), (0.0, 1.0))
    fr = FitResult(np.array([1.0]), np.ones(5), 4.0, SmnModel.normal(), -1.0, [-1.0], 1, True, basis, 1.0, 2.0, 10,
                   diagnostics={"n_params": 7})
    assert fr.sigma == 2.0 and fr.criteria == (1.0, 2.0) and fr.n_params == 7
    assert fr.beta_tilde.size == 6
    assert np.allclose(fr.psi([0.0, 0.3, 1.0]), 1.0)
