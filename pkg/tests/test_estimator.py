import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from glsaddle.estimator import SaddleSolver


@pytest.fixture(scope="module")
def fitted():
    return SaddleSolver(R=4.0, h=0.5).fit()


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        SaddleSolver().predict(np.zeros((1, 3)))


def test_params_round_trip():
    est = SaddleSolver(R=5.0, optimizer="cg")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin.set_params(h=0.2).h == 0.2


def test_fit_and_predict(fitted):
    assert fitted.residual_ < 1e-6
    assert fitted.energy_ <= fitted.report_.energies[0]
    u = fitted.predict(np.array([[0.5, 1.0, 1.5], [2.0, 0.0, 0.0]]))
    assert u[0] == pytest.approx(fitted.field_.values[1, 2, 3])
    assert u[1] == 0
    X = np.array([[1.0, 1.0, 1.0], [-1.0, 1.0, 1.0]])
    t = fitted.transform(X)
    assert t.shape == (2, 2)
    assert t[1, 0] == pytest.approx(-t[0, 0]) and t[1, 1] == pytest.approx(t[0, 1])
    assert fitted.score() == -fitted.residual_


def test_input_validation(fitted):
    with pytest.raises(ValueError):
        fitted.predict(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        fitted.predict(np.array([[np.nan, 0, 0]]))
    with pytest.raises(ValueError):
        fitted.predict(np.array([[10.0, 0, 0]]))
