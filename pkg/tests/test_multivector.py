from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnconv import multivector as mv

e = [[1 if i == k else 0 for i in range(4)] for k in range(4)]


def test_wedge_basis_and_antisymmetry():
    w = mv.wedge([e[0], e[1]])
    assert w.coeffs[0] == 1 and all(c == 0 for c in w.coeffs[1:])
    assert mv.wedge([e[1], e[0]]).coeffs == (-w).coeffs


def test_wedge_bilinear_expansion():
    lhs = mv.wedge([[1, 0, 1, 0], e[1]])
    rhs = mv.wedge([e[0], e[1]]) + mv.wedge([e[2], e[1]])
    assert lhs.coeffs == rhs.coeffs


def test_inner_products():
    assert mv.mvec_inner(mv.basis_blade(4, (0, 1)), mv.basis_blade(4, (0, 1))) == 1
    assert mv.mvec_inner(mv.basis_blade(4, (0, 1)), mv.basis_blade(4, (2, 3))) == 0


vec4 = st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=6), min_size=4, max_size=4)


@given(vec4, vec4, vec4, vec4)
def test_inner_is_gram_determinant(v1, v2, w1, w2):
    gram = [[sum(a * b for a, b in zip(p, q)) for q in (w1, w2)] for p in (v1, v2)]
    expected = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0]
    assert mv.mvec_inner(mv.wedge([v1, v2]), mv.wedge([w1, w2])) == expected


def test_phi_slots():
    assert mv.phi_coords(mv.basis_blade(4, (0, 1))) == [0, 0, 0, 0, 0, 1]
    assert mv.phi_coords(mv.basis_blade(4, (2, 3))) == [0, 0, 0, 0, 1, 0]


@given(st.lists(st.fractions(min_value=-4, max_value=4, max_denominator=5), min_size=4, max_size=4))
def test_phi_of_graph_vector(x):
    X = [[x[0], x[1]], [x[2], x[3]]]
    W = mv.wedge([[1, 0, X[0][0], X[1][0]], [0, 1, X[0][1], X[1][1]]])
    d = X[0][0] * X[1][1] - X[0][1] * X[1][0]
    assert mv.phi_coords(W) == [X[0][0], X[1][0], X[0][1], X[1][1], d, 1]
    assert mv.phi_inverse(mv.phi_coords(W)).coeffs == W.coeffs
    a = mv.area_2x2(np.asarray(X, float))
    unit = W.scaled(1 / a)
    assert float(mv.phi_coords(unit)[-1]) == pytest.approx(1 / a)
    assert W.norm() == pytest.approx(a)


def test_graph_frame_examples():
    f0 = mv.graph_frame(np.zeros((2, 2)))
    assert f0.area == 1.0
    assert np.allclose(f0.h, np.diag([1, 1, 0, 0]))
    f1 = mv.graph_frame(np.eye(2))
    assert f1.area == pytest.approx(2.0)
    assert mv.area_2x2(np.eye(2)) == pytest.approx(2.0)


def test_area_of_first_target():
    X1 = np.array([[1.6, -2.0], [-2.0, 1.6]])
    d = Fraction(64, 25) - 4
    exact = math.sqrt(float(1 + Fraction(8, 5) ** 2 * 2 + 8 + d * d))
    assert mv.area(X1) == pytest.approx(exact, rel=1e-14)
    assert mv.area_2x2(X1) == pytest.approx(exact, rel=1e-14)


@given(st.lists(st.floats(min_value=-3, max_value=3), min_size=4, max_size=4))
def test_area_gradient_matches_finite_difference(x):
    X = np.array(x, float).reshape(2, 2)
    g = mv.area_2x2_grad(X)
    h = 1e-6
    fd = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = h
            fd[i, j] = (mv.area_2x2(X + E) - mv.area_2x2(X - E)) / (2 * h)
    assert np.allclose(g, fd, atol=1e-6)
