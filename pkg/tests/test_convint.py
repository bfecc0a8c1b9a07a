from __future__ import annotations

from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnconv import convint as ci
from tnconv.tn_algebra import DomainError, defining_vector


@pytest.fixture(scope="module")
def chain():
    return ci.counterexample_chain()[0]


small = st.fractions(min_value=-3, max_value=3, max_denominator=9)


def test_unit_square_area_is_one():
    assert ci.polygon_area(ci.unit_square()) == 1


@given(small, small, small)
def test_halfplane_clip_partitions_area_exactly(nx, ny, c):
    sq = ci.unit_square()
    if nx == 0 and ny == 0:
        return
    up = ci.clip_halfplane(sq, nx, ny, c)
    down = ci.clip_halfplane(sq, -nx, -ny, -c)
    total = sum((ci.polygon_area(p) for p in (up, down) if p), F(0))
    assert total == 1


def test_lambda_weights_match_defining_vector(chain):
    k = [F(3), F(3), F(5, 2), F(4)]
    dv = defining_vector(k)
    assert np.allclose(ci.lambda_weights([float(x) for x in k]), [float(x) for x in dv.lam], atol=1e-14)
    assert ci.lambda_weights(chain.k).sum() == pytest.approx(1.0)


def test_barycenter_is_the_loop_base_point(chain):
    assert np.allclose(chain.barycenter(), chain.P, atol=1e-10)


def test_initial_map_accepts_barycenter_and_targets(chain):
    m = ci.initial_map(chain.barycenter(), chain=chain)
    assert m.cells[0].label[0] == "S"
    x1 = chain.targets()[0]
    assert ci.initial_map(x1, chain=chain).cells[0].label[0] == "X"


def test_initial_map_rejects_unreachable_datum(chain):
    with pytest.raises(DomainError, match="away from the rank-one segments"):
        ci.initial_map(np.full((2, 2), 1e3), chain=chain)


def test_initial_grid_tiles_square(chain):
    m = ci.initial_map(chain.barycenter(), chain=chain, grid_level=2)
    assert m.n_cells == 32
    assert sum(m.areas(), F(0)) == 1
    assert m.continuity_report()["continuous"]


def test_zero_stages_is_identity(chain):
    params = ci.StageParams(depth=2, chain=chain)
    m = ci.initial_map(chain.barycenter(), chain=chain)
    out = ci.refine(m, params, stages=0)
    assert out.n_cells == 1
    assert np.array_equal(out.cells[0].grad, chain.barycenter())


def test_stage_params_validation(chain):
    with pytest.raises(ValueError):
        ci.StageParams(depth=-1, chain=chain)
    with pytest.raises(ValueError):
        ci.StageParams(depth=2, chain=chain, rho=(0.5, 0.4))
    with pytest.raises(ValueError):
        ci.StageParams(depth=1, chain=chain, transition_fraction=1.5)


def test_affine_map_analysis_is_distance_of_datum(ladder):
    a = ladder[0]["analysis"]
    K = ladder["params"].targets
    A0 = ladder[0]["map"].A0
    expected = min(np.linalg.norm(A0 - x) for x in K)
    assert a["sup_distance"] == pytest.approx(expected)
    assert a["L1_distance"] == pytest.approx(expected)


def test_one_round_fractions_approach_laminate_weights(ladder):
    a = ladder[1]["analysis"]
    lam = ci.lambda_weights(ladder["params"].chain.k)
    assert np.max(np.abs(np.array(a["area_fractions_attained"]) - lam)) < 0.05


@pytest.mark.parametrize("depth", [1, 2, 6])
def test_refined_map_is_continuous_with_affine_trace(ladder, depth):
    rep = ladder[depth]["map"].continuity_report()
    assert rep["continuous"], rep
    assert rep["max_trace_defect"] <= 1e-9


@pytest.mark.parametrize("depth", [1, 2, 6])
def test_area_fractions_sum_exactly(ladder, depth):
    a = ladder[depth]["analysis"]
    assert a["fractions_sum_exact"]
    assert a["area_total"] == "1/1"
    assert a["dyadic"]["levels"][-1]["all_sums_exact"]


def test_dyadic_squares_see_most_targets(ladder):
    levels = ladder[2]["analysis"]["dyadic"]["levels"]
    assert [lev["level"] for lev in levels] == [1, 2]
    assert all(lev["min_targets_present"] >= 4 for lev in levels)


def test_sup_distance_never_increases_after_first_round(ladder):
    sups = [ladder[d]["analysis"]["sup_distance"] for d in range(1, 7)]
    assert all(b <= a + 1e-12 for a, b in zip(sups, sups[1:]))


def test_cell_budget_respected(ladder):
    assert all(ladder[d]["map"].n_cells <= 100_000 for d in range(7))
