import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from plbounds.errors import PreconditionError
from plbounds.estimators import (
    CubicSliceClassifier,
    GreenPotentialTransformer,
    RoundAnnulusModulusEstimator,
)


def test_green_potential_transformer_on_square_map():
    X = np.array([[2.0, 0.0], [0.0, 3.0], [0.5, 0.0]])
    g = GreenPotentialTransformer().fit(X).transform(X).ravel()
    assert g == pytest.approx([math.log(2), math.log(3), 0.0], abs=1e-12)


def test_transformer_in_a_pipeline():
    X = np.random.default_rng(0).uniform(-3, 3, (20, 2))
    out = make_pipeline(GreenPotentialTransformer((-1, 0, 1)), StandardScaler()).fit_transform(X)
    assert out.shape == (20, 1)


def test_params_and_clone():
    est = CubicSliceClassifier(lam=0.5, max_iter=100)
    assert est.get_params() == {"lam": 0.5, "max_iter": 100, "ph_iter": 2000}
    twin = clone(est).set_params(ph_iter=50)
    assert twin.ph_iter == 50 and est.ph_iter == 2000


def test_unfitted_estimators_refuse():
    with pytest.raises(NotFittedError):
        CubicSliceClassifier().predict([[0.0, 0.0]])
    with pytest.raises(NotFittedError):
        RoundAnnulusModulusEstimator().predict([[1.0, 2.0]])


def test_slice_classifier_labels_and_symmetry():
    X = np.array([[0.0, 0.0], [10.0, 0.0], [0.3, 0.2], [-0.3, -0.2]])
    est = CubicSliceClassifier(lam=0.5).fit(X)
    y = est.predict(X)
    assert y[0] == 2 and y[1] == 0
    assert y[2] == y[3]
    assert set(est.classes_) == {0, 1, 2}


def test_slice_classifier_validation():
    with pytest.raises(PreconditionError):
        CubicSliceClassifier(lam=2.0).fit([[0.0, 0.0]])
    with pytest.raises(PreconditionError):
        CubicSliceClassifier(max_iter=0).fit([[0.0, 0.0]])
    with pytest.raises(PreconditionError):
        CubicSliceClassifier().fit([[0.0, 0.0]]).predict([[0.0, 0.0, 1.0]])


def test_round_annulus_estimator():
    X = np.array([[1.0, math.e], [2.0, 2 * math.e]])
    out = RoundAnnulusModulusEstimator().fit(X).predict(X)
    assert out.shape == (2, 2)
    assert np.all(out[:, 0] <= 1 / (2 * math.pi) + 1e-12)
    assert np.all(out[:, 1] >= 1 / (2 * math.pi) - 1e-12)
    with pytest.raises(PreconditionError):
        RoundAnnulusModulusEstimator(n_radial=1).fit(X)
