from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from factories import random_tprime
from tnconv import exact_core as ec
from tnconv import w_matrix as wm

F = Fraction


def W_example(name, mu):
    return [[str(v) for v in r] for r in wm.build_w(wm.example_family(name), F(mu)).W]


def test_example_matrices():
    assert W_example("e1", 2) == [["1", "1", "0", "0"], ["0", "1", "1", "0"], ["0", "0", "1", "1"], ["2", "0", "0", "1"]]
    assert W_example("e2", 3) == [["1", "1", "1", "1"], ["3", "1", "1", "1"], ["3", "3", "1", "1"], ["3", "3", "3", "1"]]
    assert W_example("e3", F(7, 2)) == [
        ["1", "1", "0", "1"],
        ["0", "1", "1", "1"],
        ["7/2", "0", "1", "1"],
        ["7/2", "7/2", "0", "1"],
    ]
    assert [wm.build_w(wm.example_family(e), F(2)).C for e in ("e1", "e2", "e3")] == [2, 4, 3]


@pytest.mark.parametrize("name,mu", [("e1", F(2)), ("e2", F(3)), ("e3", F(7, 2))])
def test_kernel_trivial_examples(name, mu):
    ok, cert = wm.kernel_trivial(wm.build_w(wm.example_family(name), mu))
    assert ok and cert["exact_verdict"] and cert["h_verdict"]


def test_h_map_cyclic_shift_and_identity():
    _, c1 = wm.kernel_trivial(wm.build_w(wm.example_family("e1"), F(2)))
    assert c1["h"] == [3, 4, 1, 2] and [F(a) for a in c1["a"]] == [1, 1, 2, 2]
    _, c2 = wm.kernel_trivial(wm.build_w(wm.example_family("e2"), F(3)))
    assert c2["h"] == [1, 2, 3, 4]


def test_mu_one_control_has_kernel():
    W = wm.build_w(wm.example_family("e1"), F(2)).W
    W1 = [[F(1) if (i == 3 and j == 0) else v for j, v in enumerate(r)] for i, r in enumerate(W)]
    ok, cert = wm.kernel_trivial(wm.w_from_matrix(W1, F(1)))
    assert not ok
    (k,) = cert["kernel_basis"]
    k = [F(v) for v in k]
    assert [v / k[0] for v in k] == [1, -1, 1, -1]


def test_build_w_rejects_inadmissible():
    with pytest.raises(wm.AdmissibilityError):
        wm.build_w(wm.NormalFamily([[F(1), F(0)], [F(2), F(0)], [F(0), F(1)]]), F(2))
    with pytest.raises(ec.PreconditionError):
        wm.build_w(wm.example_family("e1"), F(1))


def test_random_admissible_families_have_trivial_kernel():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 1000:
        N, m = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        fam = wm.random_family(rng, N, m)
        mu = F(int(rng.integers(11, 60)), 10)
        try:
            ws = wm.build_w(fam, mu)
        except wm.AdmissibilityError:
            continue
        ok, cert = wm.kernel_trivial(ws)
        assert ok and cert["exact_verdict"], (fam.normals, mu)
        checked += 1


def test_m_matrices_trivial_and_random():
    rng = np.random.default_rng(4)
    cfg = random_tprime(rng)
    zeroD = type(cfg)(cfg.base, cfg.Q, cfg.R, [ec.zeros(2, 2)] * 5, cfg.E, cfg.n_dir)
    M, rep = wm.m_matrices(zeroD)
    assert all(Mi == ec.zeros(2, 2) for Mi in M) and rep["trace_free"]
    for seed in range(20):
        cfg = random_tprime(np.random.default_rng(100 + seed))
        M, rep = wm.m_matrices(cfg)
        assert rep["exact"] and rep["trace_free"] and rep["via_holds"]
        assert all(F(t) == 0 for t in rep["traces"])
