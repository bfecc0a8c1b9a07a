from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnconv import exact_core as ec

F = Fraction
rationals = st.fractions(min_value=-20, max_value=20, max_denominator=12)


def square(n):
    return st.lists(st.lists(rationals, min_size=n, max_size=n), min_size=n, max_size=n)


def test_minor_leading_block():
    M = ec.qmat([[1, 2], [3, 4], [5, 6]])
    assert ec.minor(M, ec.MultiIndexPair((0, 1), (0, 1))) == [[1, 2], [3, 4]]


def test_minor_of_first_target_is_itself():
    X1 = ec.qmat([["8/5", -2], [-2, "8/5"]])
    assert ec.minor(X1, ec.MultiIndexPair((0, 1), (0, 1))) == X1


def test_minor_diagonal_extraction():
    D = ec.qmat([[1, 0, 0], [0, 2, 0], [0, 0, 3]])
    assert ec.minor(D, ec.MultiIndexPair((0, 2), (0, 2))) == [[1, 0], [0, 3]]


def test_minor_rejects_bad_indices():
    with pytest.raises(ec.ShapeError):
        ec.MultiIndexPair((1, 0), (0, 1))
    with pytest.raises(ec.ShapeError):
        ec.minor(ec.qmat([[1, 2], [3, 4]]), ec.MultiIndexPair((0, 2), (0, 1)))


def test_adjugate_examples():
    assert ec.adjugate(ec.identity(2)) == ec.identity(2)
    assert ec.adjugate(ec.qmat([[1, 2], [3, 4]])) == [[4, -2], [-3, 1]]
    assert ec.adjugate(ec.qmat([[2]])) == [[1]]


@given(square(3))
def test_adjugate_times_matrix_is_det_identity(A):
    lhs = ec.matmul(ec.adjugate(A), A)
    assert lhs == ec.scale(ec.det(A), ec.identity(3))


def test_det_rank_one_update_examples():
    e11 = ec.qmat([[1, 0], [0, 0]])
    assert ec.det_rank_one_update(ec.identity(2), e11) == 2
    A = ec.qmat([[1, 2], [3, 4]])
    assert ec.det_rank_one_update(A, e11) == ec.det(ec.qmat([[2, 2], [3, 4]])) == 2
    assert ec.det_rank_one_update(A, ec.zeros(2, 2)) == ec.det(A)


@given(square(3), st.lists(rationals, min_size=3, max_size=3), st.lists(rationals, min_size=3, max_size=3))
def test_det_rank_one_update_matches_direct(A, u, v):
    B = ec.outer(u, v)
    assert ec.det_rank_one_update(A, B) == ec.det(ec.add(A, B))


def test_kernel_examples():
    assert ec.kernel(ec.identity(4)) == []
    basis = ec.kernel(ec.qmat([[1, 1], [1, 1]]))
    assert len(basis) == 1 and basis[0][0] == -basis[0][1] != 0
    mu = F(1)
    W = ec.qmat([[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1], [mu, 0, 0, 1]])
    (k,) = ec.kernel(W)
    assert [v / k[0] for v in k] == [1, -1, 1, -1]


@given(st.lists(st.lists(rationals, min_size=4, max_size=4), min_size=2, max_size=4))
def test_kernel_vectors_are_annihilated_and_rank_nullity(M):
    basis = ec.kernel(M)
    for v in basis:
        assert all(x == 0 for x in ec.matvec(M, v))
    assert len(basis) + ec.rank(M) == 4


@given(square(3))
def test_det_agrees_with_float(A):
    assert float(ec.det(A)) == pytest.approx(np.linalg.det(np.asarray(A, float)), abs=1e-8)


def test_inverse_and_json_round_trip():
    A = ec.qmat([[2, 1], [1, "1/3"]])
    assert ec.matmul(A, ec.inverse(A)) == ec.identity(2)
    assert ec.matrix_from_json(ec.matrix_to_json(A)) == A
    with pytest.raises(ec.ShapeError):
        ec.qmat([[1, 2], [3]])
