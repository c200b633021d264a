import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crfgat import (
    FeatureShapeError,
    GaussianBilateral,
    ModelShapeError,
    ObservedSequence,
    Polynomial,
    Precomputed,
    eval_kernel,
    kernel_matrix,
    validate_spec,
)


def test_zero_distance_is_weight():
    f = (np.array([1.0, 2.0]), np.array([0.3]))
    assert eval_kernel(f, f, GaussianBilateral.single(0.8)) == pytest.approx(0.8, abs=1e-15)
    two = GaussianBilateral(((0.5, 1.0, 1.0), (0.5, 3.0, 0.2)))
    assert eval_kernel(f, f, two) == pytest.approx(1.0, abs=1e-15)


def test_unit_spatial_offset():
    fi = (np.array([0.0]), np.array([0.0]))
    fj = (np.array([1.0]), np.array([0.0]))
    v = eval_kernel(fi, fj, GaussianBilateral.single(1.0, 1.0, 1.0))
    assert v == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert v == pytest.approx(0.6065, abs=1e-4)


def test_feature_shape_mismatch():
    with pytest.raises(FeatureShapeError):
        eval_kernel((np.zeros(2), np.zeros(1)), (np.zeros(3), np.zeros(1)), GaussianBilateral.single())


def test_matrix_examples():
    km = kernel_matrix(ObservedSequence.blank(1), GaussianBilateral.single())
    assert km.shape == (1, 1) and km[0, 0] == 0.0
    seq = ObservedSequence(np.array([[0.0], [1.0]]), np.zeros((2, 1)))
    km = kernel_matrix(seq, GaussianBilateral.single())
    assert km[0, 0] == km[1, 1] == 0.0
    assert km[0, 1] == km[1, 0] == pytest.approx(0.6065, abs=1e-4)
    stored = np.array([[0.0, 0.2, 0.1], [0.2, 0.0, 0.7], [0.1, 0.7, 0.0]])
    assert np.array_equal(kernel_matrix(ObservedSequence.blank(3), Precomputed(stored)), stored)
    with pytest.raises(ModelShapeError):
        kernel_matrix(ObservedSequence.blank(2), Precomputed(stored))


def test_matrix_matches_pointwise(rng):
    seq = ObservedSequence(rng.normal(size=(5, 2)), rng.normal(size=(5, 3)))
    for spec in (GaussianBilateral(((0.7, 1.3, 0.4), (0.2, 0.5, 2.0))), Polynomial(0.5, 1.0, 3)):
        km = kernel_matrix(seq, spec)
        for i in range(5):
            for j in range(5):
                if i != j:
                    fi = (seq.positions[i], seq.observations[i])
                    fj = (seq.positions[j], seq.observations[j])
                    assert km[i, j] == pytest.approx(eval_kernel(fi, fj, spec), rel=1e-13)


def test_polynomial_form():
    fi = (np.array([1.0]), np.array([2.0]))
    fj = (np.array([3.0]), np.array([-1.0]))
    # <(1,2),(3,-1)> = 1
    assert eval_kernel(fi, fj, Polynomial(2.0, 1.0, 2)) == pytest.approx(9.0)


def test_validate_spec():
    seq = ObservedSequence.blank(3)
    assert validate_spec(GaussianBilateral.single(), seq) == []
    problems = validate_spec(GaussianBilateral(((1.0, 1.0, 1.0), (1.0, 0.0, 1.0))), seq)
    assert len(problems) == 1 and "component 1" in problems[0]
    bad = np.zeros((3, 3))
    bad[0, 0] = 0.3
    assert any("diagonal" in p for p in validate_spec(Precomputed(bad), seq))
    asym = np.zeros((3, 3))
    asym[0, 1] = 1.0
    assert any("symmetric" in p for p in validate_spec(Precomputed(asym), seq))
    assert any("nodes" in p for p in validate_spec(Precomputed(np.zeros((2, 2))), seq))
    assert validate_spec(GaussianBilateral(()), seq)


coords = st.lists(st.floats(-10, 10), min_size=2, max_size=2)


@given(coords, coords, coords, coords, st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-2, 2))
@settings(max_examples=300, deadline=None)
def test_symmetry(p1, p2, x1, x2, s1, s2, w):
    spec = GaussianBilateral(((w, s1, s2),))
    fi, fj = (np.array(p1), np.array(x1)), (np.array(p2), np.array(x2))
    assert eval_kernel(fi, fj, spec) == eval_kernel(fj, fi, spec)
    poly = Polynomial(0.3, w, 2)
    assert eval_kernel(fi, fj, poly) == eval_kernel(fj, fi, poly)


def test_matrix_exactly_symmetric_and_bounded(rng):
    for _ in range(20):
        seq = ObservedSequence(rng.normal(size=(8, 2)) * 3, rng.normal(size=(8, 3)))
        spec = GaussianBilateral(tuple((rng.uniform(0, 2), rng.uniform(0.2, 3), rng.uniform(0.2, 3)) for _ in range(3)))
        km = kernel_matrix(seq, spec)
        assert np.array_equal(km, km.T)
        assert (km >= 0).all()
        assert km.max() <= spec.omegas.sum()
        poly = kernel_matrix(seq, Polynomial(0.2, 1.0, 3))
        assert np.array_equal(poly, poly.T)


def test_spatial_monotonicity():
    spec = GaussianBilateral.single(1.0, 1.5, 0.7)
    x = np.array([0.4])
    values = [eval_kernel((np.array([0.0, 0.0]), x), (np.array([d, 0.0]), x), spec) for d in np.linspace(0, 6, 25)]
    assert all(a > b for a, b in zip(values, values[1:]))
