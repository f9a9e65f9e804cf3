import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rkhs_koopman.kernels import (
    Centered,
    Gaussian,
    LinearAffine,
    Matern52,
    gram_matrix,
    kernel_eval,
    kernel_from_dict,
    kernel_to_dict,
    psd_min_eig_ok,
)


def gauss_ref(x, y, ell):
    d2 = sum((a - b) ** 2 for a, b in zip(x, y))
    return math.exp(-d2 / (2 * ell * ell))


def matern_ref(x, y, ell):
    d = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))
    r = math.sqrt(5) * d / ell
    return (1 + r + 5 * d * d / (3 * ell * ell)) * math.exp(-r)


ALL = [Gaussian(1.0), Gaussian(0.3), Matern52(1.0), LinearAffine(), Centered(Gaussian(0.7), (0.2, -0.1))]
coords = st.floats(-3, 3, allow_nan=False)
point = st.tuples(coords, coords)


def test_gaussian_same_point_is_one():
    assert kernel_eval(Gaussian(1.0), [0.3, 0.4], [0.3, 0.4]) == 1.0


def test_gaussian_unit_distance():
    assert kernel_eval(Gaussian(1.0), [0.0, 0.0], [1.0, 0.0]) == pytest.approx(0.6065306597, abs=1e-9)


def test_matern_matches_closed_form():
    for x, y in [((0, 0), (0.3, 0.4)), ((1, 2), (-1, 0.5)), ((0, 0), (0, 0))]:
        assert kernel_eval(Matern52(0.8), x, y) == pytest.approx(matern_ref(x, y, 0.8), rel=1e-13)


def test_linear_affine():
    assert kernel_eval(LinearAffine(), [1, 0], [2, 3]) == 3.0


def test_centered_vanishes_at_anchor():
    k = Centered(Matern52(1.0), (0.5, 0.5))
    assert kernel_eval(k, [0.5, 0.5], [1.0, -2.0]) == pytest.approx(0.0, abs=1e-15)


def test_gram_double_loop(rng):
    X = rng.standard_normal((3, 2))
    Y = rng.standard_normal((4, 2))
    K = gram_matrix(Gaussian(1.0), X, Y)
    ref = np.array([[gauss_ref(x, y, 1.0) for y in Y] for x in X])
    np.testing.assert_allclose(K, ref, rtol=0, atol=1e-15)


def test_gram_single_point():
    assert gram_matrix(Gaussian(2.0), [[1.0, 2.0]]).tolist() == [[1.0]]


@pytest.mark.parametrize(
    "bad",
    [
        lambda: gram_matrix(Gaussian(1.0), np.zeros((0, 2))),
        lambda: gram_matrix(Gaussian(1.0), np.zeros((2, 2)), np.zeros((2, 3))),
        lambda: kernel_eval(Gaussian(1.0), [0, 0], [0, 0, 0]),
        lambda: gram_matrix(Centered(Gaussian(1.0), (0.0,)), np.zeros((2, 2))),
        lambda: Gaussian(0.0),
        lambda: Matern52(-1.0),
        lambda: Centered(Centered(Gaussian(1.0), (0.0,)), (0.0,)),
    ],
)
def test_input_errors(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("k", ALL, ids=lambda k: type(k).__name__)
def test_dict_round_trip(k):
    assert kernel_from_dict(kernel_to_dict(k)) == k


def test_unknown_kind():
    with pytest.raises(ValueError):
        kernel_from_dict({"kind": "cauchy"})


@pytest.mark.parametrize("k", ALL, ids=lambda k: type(k).__name__)
@given(x=point, y=point)
def test_symmetry(k, x, y):
    assert abs(kernel_eval(k, x, y) - kernel_eval(k, y, x)) <= 1e-12


@given(y=point)
def test_centering_property(y):
    for base in (Gaussian(1.0), Matern52(0.5), LinearAffine()):
        k = Centered(base, (0.3, -0.2))
        assert abs(kernel_eval(k, (0.3, -0.2), y)) <= 1e-12
        assert abs(kernel_eval(k, y, (0.3, -0.2))) <= 1e-12


@pytest.mark.parametrize("k", ALL, ids=lambda k: type(k).__name__)
@given(X=arrays(np.float64, st.tuples(st.integers(1, 10), st.just(2)), elements=coords))
def test_gram_psd(k, X):
    K = gram_matrix(k, X)
    assert np.array_equal(K, K.T)
    assert psd_min_eig_ok(K)


@pytest.mark.parametrize("k", [Gaussian(1.0), Gaussian(0.2), Matern52(1.0), Matern52(3.0)], ids=repr)
@given(direction=st.tuples(coords, coords).filter(lambda d: d[0] ** 2 + d[1] ** 2 > 1e-6), origin=point)
def test_decay_along_ray(k, direction, origin):
    d = np.array(direction) / np.linalg.norm(direction)
    ts = np.linspace(0, 5, 60)
    vals = gram_matrix(k, np.asarray(origin)[None, :], np.asarray(origin) + ts[:, None] * d)[0]
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.all((vals > 0) & (vals <= 1.0))
