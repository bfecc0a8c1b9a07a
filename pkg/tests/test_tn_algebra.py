from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from factories import random_tn, random_tprime
from tnconv import exact_core as ec
from tnconv import tn_algebra as tn

F = Fraction

ks = st.lists(
    st.fractions(min_value=F(10, 9), max_value=20, max_denominator=9).filter(lambda v: v > 1), min_size=2, max_size=7
)


def test_defining_vector_equal_twos():
    dv = tn.defining_vector([F(2)] * 3)
    assert dv.lam == [F(1, 7), F(2, 7), F(4, 7)]
    assert dv.mu == 8
    assert dv.t == [[F(1, 7), F(2, 7), F(4, 7)], [F(4, 7), F(1, 7), F(2, 7)], [F(2, 7), F(4, 7), F(1, 7)]]
    assert dv.xi == [1, 2, 4]


def test_defining_vector_two_threes():
    dv = tn.defining_vector([F(3), F(3)])
    assert dv.lam == [F(2, 5), F(3, 5)]
    # the value forced by the defining relation (see decisions ledger)
    assert dv.mu == F(9, 4)
    assert tn.k_from_defining(dv.lam, dv.mu) == [3, 3]


def test_defining_vector_rejects_small_k():
    with pytest.raises(tn.DomainError):
        tn.defining_vector([F(2), F(1)])
    with pytest.raises(tn.DomainError):
        tn.defining_vector([F(2)])


@given(ks)
def test_defining_vector_round_trip_exact(k):
    dv = tn.defining_vector(k)
    assert tn.k_from_defining(dv.lam, dv.mu) == k
    assert sum(dv.lam) == 1 and dv.mu > 1
    assert dv.xi[0] == 1
    for t in dv.t:
        assert all(v > 0 for v in t) and sum(t) == 1


def test_assemble_examples():
    P = ec.qmat([[1, 2], [3, 4]])
    cfg = tn.TNConfig(P=P, C=[ec.zeros(2, 2)] * 3, k=[F(2)] * 3)
    assert tn.assemble(cfg) == [P] * 3
    u, n = [F(1), F(2)], [F(3), F(-1)]
    un = ec.outer(u, n)
    X1, X2 = tn.assemble(tn.TNConfig(P=ec.zeros(2, 2), C=[un, ec.scale(-1, un)], k=[F(2), F(2)]))
    assert X1 == ec.scale(2, un) and X2 == ec.scale(-1, un)


def test_check_tn_valid_and_k_equal_one():
    rng = np.random.default_rng(1)
    cfg = random_tn(rng)
    assert tn.check_tn(tn.assemble(cfg), cfg)["passed"]
    bad = tn.TNConfig(cfg.P, cfg.C, [cfg.k[0], F(1)] + cfg.k[2:])
    rep = tn.check_tn(tn.assemble(bad), bad)
    assert not rep["passed"] and "k_2 not > 1" in rep["failures"]


def test_detect_round_trip_on_random_witness():
    rng = np.random.default_rng(3)
    cfg = random_tn(rng, 4)
    Xs = tn.assemble(cfg)
    found = tn.detect_tn(Xs, seed=0)
    assert found is not None
    witness, rep = found
    assert rep["passed"] and rep["residual"] < 1e-9
    assert all(k > 1 for k in witness.k)
    assert np.allclose(np.asarray(witness.k, float), np.asarray(cfg.k, float), atol=1e-7)


def test_detect_rank_one_pair_passes_check():
    u, n = [F(1), F(1)], [F(1), F(0)]
    X1 = ec.qmat([[0, 0], [0, 0]])
    X2 = ec.outer(u, n)
    found = tn.detect_tn([X1, X2], seed=0)
    if found is not None:
        witness, _ = found
        assert tn.check_tn([np.asarray(X1, float).tolist(), np.asarray(X2, float).tolist()], witness, tol=1e-8)["passed"]


def test_detect_rejects_coincident():
    X = ec.qmat([[1, 0], [0, 1]])
    with pytest.raises(ec.PreconditionError):
        tn.detect_tn([X, X])


def test_check_tn_prime_examples():
    rng = np.random.default_rng(5)
    cfg = random_tprime(rng)
    assert tn.check_tn_prime(tn.assemble_prime(cfg), cfg)["passed"]
    # wave-cone violation: D₁ n₁ ≠ 0
    D = [ec.add(cfg.D[0], ec.outer([F(1), F(0)], cfg.n_dir[0]))] + cfg.D[1:]
    D[-1] = ec.sub(D[-1], ec.outer([F(1), F(0)], cfg.n_dir[0]))
    bad = tn.TPrimeNConfig(cfg.base, cfg.Q, cfg.R, D, cfg.E, cfg.n_dir)
    rep = tn.check_tn_prime(tn.assemble_prime(bad), bad)
    assert any("wave-cone violation at index 1" == f for f in rep["failures"])
    # only the X part nonzero → stacked matrices coincide when X's coincide
    zero = tn.TNConfig(cfg.base.P, [ec.zeros(2, 2)] * 5, cfg.k)
    z = tn.TPrimeNConfig(zero, ec.zeros(2, 2), ec.zeros(2, 2), [ec.zeros(2, 2)] * 5, [ec.zeros(2, 2)] * 5)
    rep = tn.check_tn_prime(tn.assemble_prime(z), z)
    assert any("not distinct" in f for f in rep["failures"])


def test_lambda_dc_member_examples():
    Z2 = ec.zeros(2, 2)
    xi, u = tn.lambda_dc_member(Z2, Z2, Z2)
    assert xi in ([1, 0], [0, 1]) and u == [0, 0]
    X = ec.qmat([[0, 1], [0, 0]])
    Y = ec.qmat([[1, 0], [2, 0]])
    Z = ec.qmat([[3, 0], [-1, 0]])
    xi, u = tn.lambda_dc_member(X, Y, Z)
    assert xi == [0, 1] and u == [1, 0]
    assert tn.lambda_dc_member(ec.identity(2), Z2, Z2) is None


def test_identity_suite_trivial_and_full_minor():
    rng = np.random.default_rng(7)
    cfg = random_tn(rng)
    rep = tn.identity_suite(cfg)
    assert rep["passed"] and rep["exact"] and rep["sum_minor"] == 0
    flat = tn.TNConfig(cfg.P, [ec.zeros(2, 2)] * 5, cfg.k)
    assert tn.identity_suite(flat)["passed"]


@given(st.integers(0, 10_000))
def test_identity_suite_random_tprime(seed):
    cfg = random_tprime(np.random.default_rng(seed))
    rep = tn.identity_suite(cfg)
    assert rep["passed"] and rep["exact"]
    assert rep["partial_sums_X"] == rep["sum_minor"] == rep["partial_sums_Z"] == rep["quadratic_sum"] == 0


def test_config_json_round_trip_and_errors():
    cfg = random_tprime(np.random.default_rng(9))
    back = tn.config_from_json(cfg.to_json())
    assert tn.assemble_prime(back) == tn.assemble_prime(cfg)
    with pytest.raises(ec.ShapeError):
        tn.config_from_json({"N": 2, "n": 2, "m": 2, "P": [[0, 0], [0, 0]], "C": [], "k": []})


def test_builtin_permutations_detected(data):
    for perm in ([1, 2, 3, 5, 4], [1, 2, 4, 5, 3], [1, 2, 5, 3, 4]):
        Xs = [data.X[p - 1] for p in perm]
        found = tn.detect_tn(Xs, seed=0)
        assert found is not None
        witness, rep = found
        assert rep["residual"] < 1e-9 and all(k > 1 for k in witness.k)
