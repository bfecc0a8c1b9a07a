from __future__ import annotations

from fractions import Fraction as F

import numpy as np
import pytest

from tnconv import convint as ci
from tnconv import exact_core as ec
from tnconv import stationarity as st
from tnconv.inclusion import connected_pair_quadratic


def _affine_current(A0, beta=2.0, grid_level=2):
    m = ci.initial_map(np.asarray(A0, float), grid_level=grid_level)
    return st.GraphCurrent(m, np.full(m.n_cells, beta))


def _stripe_laminate(A, Ap, xi, beta, beta_p, stripes=6):
    """Simple laminate on the unit square: stripes ξ·x ∈ [t_j, t_{j+1}] alternating A, A' (continuous)."""
    nx, ny = xi
    lo = min(nx * x + ny * y for x, y in ci.unit_square())
    hi = max(nx * x + ny * y for x, y in ci.unit_square())
    cuts = [lo + (hi - lo) * F(j, stripes) for j in range(stripes + 1)]
    A, Ap = np.asarray(A, float), np.asarray(Ap, float)
    offset = np.zeros(2)
    cells, betas = [], []
    for j in range(stripes):
        poly = ci.clip_halfplane(ci.unit_square(), nx, ny, cuts[j])
        poly = ci.clip_halfplane(poly, -nx, -ny, -cuts[j + 1])
        G, b = (A, beta) if j % 2 == 0 else (Ap, beta_p)
        if j:
            # match the previous stripe on the line ξ·x = t_j
            prev = cells[-1]
            p = np.array([float(cuts[j]) * float(nx), float(cuts[j]) * float(ny)]) / float(nx * nx + ny * ny)
            offset = prev.grad @ p + prev.offset - G @ p
        if poly:
            cells.append(ci.Cell(poly=poly, grad=G.copy(), offset=offset.copy(), label=("L", j)))
            betas.append(float(b))
    m = ci.PiecewiseAffineMap(cells=cells, A0=A, b0=np.zeros(2), domain=ci.unit_square())
    return st.GraphCurrent(m, np.array(betas))


@pytest.fixture(scope="module")
def toy():
    X = [[F(1), F(1, 2)], [F(-1, 3), F(2)]]
    xi = (F(1), F(2))
    p, q, kappa = connected_pair_quadratic(X, xi, F(1), F(3))
    T = _stripe_laminate(np.array(p.X, float), np.array(q.X, float), xi, p.beta, q.beta)
    return T, st.quadratic_integrand(float(kappa)), (p, q)


def test_quadrature_rules_integrate_polynomials_exactly():
    # barycentric nodes, weights summing to 1: ∫ λ₁^a λ₂^b over the reference triangle = a! b! / (a + b + 2)!
    from math import factorial

    for deg in (1, 2, 4):
        nodes, w = st.triangle_rule(deg)
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                assert 0.5 * np.sum(w * nodes[:, 0] ** a * nodes[:, 1] ** b) == pytest.approx(exact, abs=1e-12)


def test_quadrature_degree_below_bump_degree_rejected():
    T = _affine_current(np.eye(2))
    with pytest.raises(st.QuadratureError):
        st.weak_residual(T, st.area_integrand(), quadrature_degree=2)


@pytest.mark.parametrize("A0", [np.eye(2), [[0.3, -1.2], [2.0, 0.7]], [[5.0, 1.0], [1.0, -4.0]]])
def test_affine_residuals_vanish(A0):
    for f in (st.area_integrand(), st.quadratic_integrand(0.7)):
        r = st.weak_residual(_affine_current(A0), f)
        assert r["outer_max"] <= 1e-12 and r["inner_max"] <= 1e-12
        assert r["basis_size"] == 18


def test_affine_residuals_vanish_for_built_integrand(built, xs_float):
    for X in xs_float:
        r = st.weak_residual(_affine_current(X, beta=3.0, grid_level=1), st.integrand_from_built(built))
        assert r["outer_max"] <= 1e-12 and r["inner_max"] <= 1e-12


def test_compatible_laminate_is_stationary(toy):
    T, f, (p, q) = toy
    assert T.map.continuity_report()["continuous"]
    assert sum(T.map.areas(), F(0)) == 1
    r = st.weak_residual(T, f, st.bump_basis(5))
    assert r["outer_max"] < 1e-10 and r["inner_max"] < 1e-10


def test_laminate_with_wrong_multiplicity_is_not_stationary(toy):
    T, f, _ = toy
    wrong = st.GraphCurrent(T.map, np.ones(T.map.n_cells))
    r = st.weak_residual(wrong, f, st.bump_basis(5))
    assert max(r["outer_max"], r["inner_max"]) > 1e-3


def test_residuals_are_linear_in_multiplicity(toy, built):
    T, _, _ = toy
    f = st.integrand_from_built(built)
    r1, r3 = st.weak_residual(T, f), st.weak_residual(T.scaled(3.0), f)
    assert np.allclose(r3["_outer"], 3 * r1["_outer"], atol=1e-12)
    assert np.allclose(r3["_inner"], 3 * r1["_inner"], atol=1e-12)


def test_residual_report_is_serialisable(toy):
    T, f, _ = toy
    rep = st.residual_report(T, f, depth=1)
    assert rep["depth"] == 1 and not any(k.startswith("_") for k in rep)


def test_current_validation():
    m = ci.initial_map(np.eye(2))
    with pytest.raises(ValueError):
        st.GraphCurrent(m, np.array([0.0]))
    with pytest.raises(ValueError):
        st.GraphCurrent(m, np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        st.GraphCurrent(m, np.array([1.5]), integral=True)
    assert st.GraphCurrent(m, np.array([2.0]), integral=True).scaled(2.0).integral


def test_energy_of_affine_graph():
    A0 = np.array([[0.3, -1.2], [2.0, 0.7]])
    T = _affine_current(A0, beta=1.0)
    area = np.sqrt(1 + np.sum(A0**2) + np.linalg.det(A0) ** 2)
    assert st.sigma_energy(T, st.area_integrand()) == pytest.approx(area, rel=1e-14)
    assert st.sigma_energy(T.scaled(2.0), st.area_integrand()) == pytest.approx(2 * area, rel=1e-14)
    # the area integrand is Ψ = ‖·‖ on unit 2-vectors
    assert st.sigma_energy(T, psi=lambda P: np.linalg.norm(P, axis=1)) == pytest.approx(area, rel=1e-14)


def test_energy_routes_agree_on_counterexample(small_current, built, model):
    rep = st.energy_report(small_current, st.integrand_from_built(built), st.PerspectivePsi(model).value)
    assert rep["relative_difference"] <= 1e-8


def test_phi_of_graph_coordinates():
    X = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    assert np.allclose(st.phi_of_graph(X), [[1.0, 3.0, 2.0, 4.0, -2.0, 1.0]])


def test_perspective_needs_positive_orientation(model):
    with pytest.raises(ValueError):
        st.PerspectivePsi(model).value(np.array([[0, 0, 0, 0, 0, -1.0]]))


@pytest.fixture(scope="module")
def small_current(data):
    chain, perm = ci.counterexample_chain()
    params = ci.StageParams(depth=1, chain=chain, periods=2)
    m = ci.refine(ci.initial_map(chain.barycenter(), chain=chain), params)
    return st.GraphCurrent.from_targets(m, params.targets, [data.beta[p - 1] for p in perm])


def test_first_variation_of_zero_field_vanishes(small_current, model):
    zero = st.VectorField(lambda P: np.zeros_like(P), lambda P: np.zeros(P.shape + (4,)))
    r = st.first_variation(small_current, st.PerspectivePsi(model), zero)
    assert r["formula"] == 0.0 and r["finite_difference"] == 0.0


def test_first_variation_of_translation_vanishes(small_current, model):
    g = st.translation_field([0.3, -0.2, 1.0, 0.5], radius=1e3)
    r = st.first_variation(small_current, st.PerspectivePsi(model), g)
    assert abs(r["formula"]) <= 1e-9 and abs(r["finite_difference"]) <= 1e-6


def test_first_variation_formula_matches_finite_difference(small_current, model):
    c = small_current.map.cells[len(small_current.map.cells) // 2]
    x = np.mean(np.array(c.poly, float), axis=0)
    centre = np.concatenate([x, c.value(x)])
    g = st.bump_field(centre, 0.4, [0.2, -0.1, 1.0, 0.3])
    psi = st.PerspectivePsi(model)
    r = st.first_variation(small_current, psi, g, h_step=1e-3)
    assert abs(r["formula"]) > 1e-6
    assert r["difference"] <= max(1e-4, 1e-3 * abs(r["formula"]))


def test_targets_pairwise_not_rank_one_connected(data):
    # a mosaic of exact targets cannot be continuous, so no cell pattern is exactly stationary
    for i in range(5):
        for j in range(i + 1, 5):
            assert ec.det(ec.sub(data.X[i], data.X[j])) != 0
