from __future__ import annotations

import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from tnconv import counterexample as ce
from tnconv import exact_core as ec
from tnconv.multivector import area_2x2

F = Fraction


def test_builtin_values(data):
    assert data.X[0] == [[F(8, 5), F(-2)], [F(-2), F(8, 5)]]
    assert data.d[1] == 0 and data.d[4] == 0
    assert data.lift_D == ec.zeros(2, 2)
    assert data.c[2] == F(-2929, 1137000)


def test_affine_lift_entry(data):
    Y1 = ec.add(ec.matmul(data.lift_A, data.X[0]), data.lift_B)
    assert Y1 == data.Y[0]
    assert Y1[0][1] == F(32, 5685) + F(4801, 454800) == F(7361, 454800)


def test_verify_conditions_builtin(data):
    rep = ce.verify_conditions(data)
    assert rep["passed"]
    assert rep["negativity"]["passed"] and not rep["negativity"]["violations"]
    assert rep["orderings"]["passed"] and rep["affine_lift"]["passed"] and rep["lifted_T5"]["passed"]


def test_verify_conditions_detects_perturbed_value(data):
    bad = replace(data, c=data.c[:3] + [F(1)] + data.c[4:])
    rep = ce.verify_conditions(bad)
    assert not rep["negativity"]["passed"] and rep["negativity"]["violations"]


def test_integrand_interpolates(built, data):
    for X, Y, b, c in zip(data.X, data.Y, data.beta, data.c):
        val, grad = ce.eval_integrand(built, np.asarray(X, float))
        assert val == pytest.approx(float(c), abs=1e-10)
        Yrec = float(b) * grad @ np.asarray(ce.J_ROT, float)
        assert np.max(np.abs(Yrec - np.asarray(Y, float))) <= 1e-7


def test_integrand_value_at_x3(built, data):
    assert ce.eval_integrand(built, np.asarray(data.X[2], float))[0] == pytest.approx(-2929 / 1137000, abs=1e-12)


def test_integrand_gradient_matches_finite_difference(built):
    rng = np.random.default_rng(0)
    Xs = rng.normal(size=(20, 2, 2)) * 2
    _, G = ce.eval_integrand_many(built, Xs)
    h = 1e-6
    for X, g in zip(Xs, G):
        fd = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                E = np.zeros((2, 2))
                E[i, j] = h
                fd[i, j] = (ce.eval_integrand_many(built, (X + E)[None])[0][0] - ce.eval_integrand_many(built, (X - E)[None])[0][0]) / (2 * h)
        assert np.allclose(g, fd, atol=1e-6)


def test_tail_identity(built):
    rng = np.random.default_rng(1)
    hits = 0
    while hits < 100:
        X = rng.normal(size=(2, 2))
        X *= rng.uniform(1, 4) * 2 * built.R2 / np.linalg.norm(X)
        z = ce.lift_point(X)
        if np.linalg.norm(z) < 2 * built.R2:
            continue
        val, _ = ce.eval_integrand(built, X)
        assert val == pytest.approx((built.epsilon + built.M) * area_2x2(X) - built.L, abs=1e-10 * (1 + abs(val)))
        hits += 1


def test_h_midpoint_convexity(built):
    rng = np.random.default_rng(2)
    R = 3 * built.R2
    p = rng.normal(size=(10_000, 5)) * R / 3
    q = rng.normal(size=(10_000, 5)) * R / 3
    gap = built.h((p + q) / 2) - (built.h(p) + built.h(q)) / 2
    assert gap.max() <= 1e-9


def test_build_certificates_and_time(data):
    t0 = time.perf_counter()
    b = ce.build_integrand(data)
    assert time.perf_counter() - t0 < 120
    rep = ce.build_report(b, data)
    anchors = [c for c in rep["certificates"] if "anchor" in c]
    assert len(anchors) == 5 and all(c["single_piece"] and c["certified_margin_on_ball"] > 0 for c in anchors)


def test_build_rejects_data_without_negativity(data):
    bad = replace(data, c=data.c[:3] + [F(1)] + data.c[4:])
    with pytest.raises(ec.PreconditionError):
        ce.build_integrand(bad)
