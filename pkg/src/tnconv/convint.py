"""Finite-depth convex integration: piecewise-affine maps whose gradients oscillate along a T_N loop.

Geometry is exact: cells are convex polygons with rational vertices, so areas and
area fractions are exact rationals.  Gradients and offsets are floats.

One *stage* runs once around the loop.  Each step splits every active cell with
gradient G on the segment [P_i, X_i] by a simple laminate in the rank-one
direction of C_i.  The laminate profile is cut off against the cell boundary, as
φ = min(sawtooth, κ·dist_∂cell), so the map is unchanged on ∂cell.  This keeps
the map continuous and the boundary trace affine.  Pieces where the sawtooth
is active carry the two laminate gradients: the leaf X_i and the remainder
P_i, which is split again at the next step.  Pieces where the cutoff is active
are transition cells and are frozen.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import exact_core as ec
from . import kernels
from .tn_algebra import DomainError, TNConfig

try:  # GMP rationals are an order of magnitude faster than fractions.Fraction
    from gmpy2 import mpq as Q
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    Q = Fraction

Point = tuple[Fraction, Fraction]

#: denominators used when rationalising split directions and laminate fractions
DIRECTION_DENOMINATOR = 2**16
FRACTION_DENOMINATOR = 2**16
#: relative tolerance for "this gradient equals that target"
HIT_TOL = 1e-6


class StageFailure(RuntimeError):
    """A stage met a cell it cannot split, or the cell budget was exceeded."""

    def __init__(self, message: str, report: dict[str, Any]):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# exact convex-polygon geometry
# ---------------------------------------------------------------------------


def polygon_area(poly: Sequence[Point]) -> Fraction:
    """Signed shoelace area (positive for counter-clockwise order)."""
    s = Q(0)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2


def clip_halfplane(poly: Sequence[Point], nx: Fraction, ny: Fraction, c: Fraction) -> list[Point]:
    """Part of a convex polygon where nx·x + ny·y ≥ c (empty list if degenerate)."""
    if not poly:
        return []
    vals = [nx * x + ny * y - c for x, y in poly]
    if all(v >= 0 for v in vals):
        return list(poly)
    if all(v <= 0 for v in vals):
        return []
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        vp, vq = vals[i], vals[(i + 1) % n]
        if vp >= 0:
            out.append(p)
        if (vp > 0 and vq < 0) or (vp < 0 and vq > 0):
            t = vp / (vp - vq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    cleaned: list[Point] = []
    for p in out:
        if not cleaned or cleaned[-1] != p:
            cleaned.append(p)
    if len(cleaned) > 1 and cleaned[0] == cleaned[-1]:
        cleaned.pop()
    if len(cleaned) < 3 or polygon_area(cleaned) <= 0:
        return []
    return _drop_collinear(cleaned) if any(v == 0 for v in vals) else cleaned


def _drop_collinear(poly: list[Point]) -> list[Point]:
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        a, b, c = poly[i - 1], poly[i], poly[(i + 1) % n]
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) != 0:
            out.append(b)
    return out


def edge_line(p: Point, q: Point) -> tuple[Fraction, Fraction, Fraction]:
    """Inward line (nx, ny, c) of the edge p→q of a CCW polygon, scaled so max(|nx|,|ny|) = 1.

    ℓ(x) = nx·x + ny·y − c is ≥ 0 inside and vanishes on the edge; the scaling is
    canonical, so the same geometric line always has the same representation.
    """
    nx, ny = -(q[1] - p[1]), q[0] - p[0]
    s = max(abs(nx), abs(ny))
    nx, ny = nx / s, ny / s
    return nx, ny, nx * p[0] + ny * p[1]


def triangulate(poly: Sequence[Point]) -> list[tuple[Point, Point, Point]]:
    """Fan triangulation of a convex polygon."""
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _snap_down(x: Fraction, bits: int = 20) -> Fraction:
    y = x * 2**bits
    return Q(int(y.numerator) // int(y.denominator), 2**bits)


def _limit(x: Any, denominator: int) -> Fraction:
    """Closest rational with bounded denominator, as the geometry's rational type."""
    if hasattr(x, "numerator") and not isinstance(x, (int, float)):
        x = Fraction(int(x.numerator), int(x.denominator))
    return Q(Fraction(x).limit_denominator(denominator))


def _rational_direction(n: np.ndarray) -> tuple[Fraction, Fraction]:
    """A rational vector parallel to n up to the rationalisation error, scaled so max-norm is 1."""
    n = np.asarray(n, float)
    if abs(n[0]) >= abs(n[1]):
        return Q(int(np.sign(n[0]))), _limit(float(n[1] / abs(n[0])), DIRECTION_DENOMINATOR)
    return _limit(float(n[0] / abs(n[1])), DIRECTION_DENOMINATOR), Q(int(np.sign(n[1])))


def _fclip(poly: list[tuple[float, float]], nx: float, ny: float, c: float, slack: float = 1e-9):
    """Float clip against a slightly enlarged half-plane: a cheap superset test for the exact clip."""
    if not poly:
        return poly
    c = c - slack * (1.0 + abs(c))
    vals = [nx * x + ny * y - c for x, y in poly]
    if min(vals) >= 0:
        return poly
    if max(vals) <= 0:
        return []
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        vp, vq = vals[i], vals[(i + 1) % n]
        if vp >= 0:
            out.append(p)
        if (vp > 0 > vq) or (vp < 0 < vq):
            t = vp / (vp - vq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out if len(out) >= 3 else []


def _max_inner_level(poly: Sequence[Point]) -> float:
    """max over the polygon of min_e ℓ_e (a Chebyshev-centre problem in the ℓ-scaling)."""
    from scipy.optimize import linprog

    lines = [edge_line(poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly))]
    A = np.array([[-float(nx), -float(ny), 1.0] for nx, ny, _ in lines])
    b = np.array([-float(c) for _, _, c in lines])
    res = linprog([0.0, 0.0, -1.0], A_ub=A, b_ub=b, bounds=[(None, None)] * 3, method="highs")
    if res.status != 0:  # pragma: no cover - a nondegenerate polygon always has a centre
        raise RuntimeError("Chebyshev centre failed")
    return float(res.x[2])


# ---------------------------------------------------------------------------
# the map
# ---------------------------------------------------------------------------


@dataclass
class Cell:
    """A convex polygon on which the map is affine: u(x) = grad @ x + offset."""

    poly: list[Point]
    grad: np.ndarray
    offset: np.ndarray
    label: tuple[Any, ...]

    @property
    def area(self) -> Fraction:
        return polygon_area(self.poly)

    def value(self, x: Sequence[float]) -> np.ndarray:
        return self.grad @ np.asarray(x, float) + self.offset


@dataclass
class PiecewiseAffineMap:
    """A continuous piecewise-affine map Ω → R² with affine boundary trace x ↦ A₀x + b₀."""

    cells: list[Cell]
    A0: np.ndarray
    b0: np.ndarray
    domain: list[Point]
    history: list[dict[str, Any]] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_triangles(self) -> int:
        return sum(len(c.poly) - 2 for c in self.cells)

    def gradients(self) -> np.ndarray:
        return np.array([c.grad for c in self.cells])

    def areas(self) -> list[Fraction]:
        return [c.area for c in self.cells]

    def triangles(self) -> list[dict[str, Any]]:
        """Cell soup of triangles with per-triangle affine data."""
        out = []
        for c in self.cells:
            for tri in triangulate(c.poly):
                out.append({"vertices": [[float(x), float(y)] for x, y in tri], "grad": c.grad, "offset": c.offset})
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "A0": self.A0.tolist(),
            "b0": self.b0.tolist(),
            "domain": [[ec.fraction_to_str(x), ec.fraction_to_str(y)] for x, y in self.domain],
            "cells": [
                {
                    "vertices": [[ec.fraction_to_str(x), ec.fraction_to_str(y)] for x, y in c.poly],
                    "grad": c.grad.tolist(),
                    "offset": c.offset.tolist(),
                    "label": list(c.label),
                }
                for c in self.cells
            ],
            "stages": self.history,
        }

    def continuity_report(self) -> dict[str, Any]:
        """Jumps of value and tangential derivative across shared edges, and the boundary trace defect.

        Edges are grouped by their canonical supporting line; along each line the
        covering intervals are swept.  Pieces covered twice are interior interfaces
        (compared at both ends), pieces covered once must lie on ∂Ω (compared with
        the affine trace), anything else is a tiling defect.
        """
        groups: dict[tuple[Fraction, Fraction, Fraction], list[tuple[Fraction, Fraction, int]]] = defaultdict(list)
        for ci, c in enumerate(self.cells):
            n = len(c.poly)
            for i in range(n):
                p, q = c.poly[i], c.poly[(i + 1) % n]
                nx, ny, cc = edge_line(p, q)
                key, _ = _undirected(nx, ny, cc)
                tp, tq = _along(p, key[0], key[1]), _along(q, key[0], key[1])
                groups[key].append((min(tp, tq), max(tp, tq), ci))
        boundary_lines = {
            _undirected(*edge_line(self.domain[i], self.domain[(i + 1) % len(self.domain)]))[0]
            for i in range(len(self.domain))
        }
        max_jump = 0.0
        max_tangential = 0.0
        max_trace = 0.0
        defects = 0
        defect_examples: list[dict[str, Any]] = []
        for key, items in groups.items():
            nx, ny, cc = key
            cuts = sorted({t for a, b, _ in items for t in (a, b)})
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                cov = [ci for a, b, ci in items if a <= lo and b >= hi]
                if not cov:
                    continue
                pts = [_point_on(key, lo), _point_on(key, hi)]
                tang = np.array([-float(ny), float(nx)])
                if len(cov) == 2:
                    c1, c2 = self.cells[cov[0]], self.cells[cov[1]]
                    for p in pts:
                        max_jump = max(max_jump, float(np.max(np.abs(c1.value(p) - c2.value(p)))))
                    max_tangential = max(max_tangential, float(np.max(np.abs((c1.grad - c2.grad) @ tang))))
                elif len(cov) == 1 and key in boundary_lines:
                    c1 = self.cells[cov[0]]
                    for p in pts:
                        trace = self.A0 @ np.asarray(p, float) + self.b0
                        max_trace = max(max_trace, float(np.max(np.abs(c1.value(p) - trace))))
                else:
                    defects += 1
                    defect_examples.append({"line": [str(nx), str(ny), str(cc)], "interval": [str(lo), str(hi)], "cover": len(cov)})
        return {
            "max_value_jump": max_jump,
            "max_tangential_jump": max_tangential,
            "max_trace_defect": max_trace,
            "tiling_defects": defects,
            "defect_examples": defect_examples[:5],
            "continuous": defects == 0
            and max_jump <= 1e-12 * (1 + self.scale())
            and max_tangential <= 1e-12 * (1 + self.scale()),
        }

    def scale(self) -> float:
        return float(max(np.max(np.abs(c.grad)) + np.max(np.abs(c.offset)) for c in self.cells))


def _undirected(nx: Fraction, ny: Fraction, c: Fraction) -> tuple[tuple[Fraction, Fraction, Fraction], int]:
    if nx > 0 or (nx == 0 and ny > 0):
        return (nx, ny, c), 1
    return (-nx, -ny, -c), -1


def _along(p: Point, nx: Fraction, ny: Fraction) -> Fraction:
    return -ny * p[0] + nx * p[1]


def _point_on(key: tuple[Fraction, Fraction, Fraction], t: Fraction) -> tuple[float, float]:
    nx, ny, c = key
    s = nx * nx + ny * ny
    return float((nx * c - ny * t) / s), float((ny * c + nx * t) / s)


def unit_square() -> list[Point]:
    return [(Q(0), Q(0)), (Q(1), Q(0)), (Q(1), Q(1)), (Q(0), Q(1))]


# ---------------------------------------------------------------------------
# the loop of rank-one segments
# ---------------------------------------------------------------------------


@dataclass
class LaminateChain:
    """The loop P_{i+1} = P_i + C_i with arms X_i = P_i + k_iC_i (indices cyclic, P_{N+1} = P_1)."""

    P: np.ndarray
    C: np.ndarray
    k: np.ndarray
    normals: list[tuple[Fraction, Fraction]]

    @classmethod
    def from_witness(cls, witness: TNConfig) -> "LaminateChain":
        P = np.asarray(witness.P, float)
        C = np.array([np.asarray(c, float) for c in witness.C])
        k = np.array([float(v) for v in witness.k])
        normals = []
        for c in C:
            _, _, vt = np.linalg.svd(c)
            normals.append(_rational_direction(vt[0]))
        return cls(P=P, C=C, k=k, normals=normals)

    @property
    def N(self) -> int:
        return len(self.k)

    def partial(self, i: int) -> np.ndarray:
        """P_i for 0-based i (P_0 = P)."""
        return self.P + self.C[: i % self.N].sum(axis=0)

    def arm(self, i: int, rho: float = 1.0) -> np.ndarray:
        """P_i + (1 + ρ(k_i − 1))C_i: the arm tip, shortened when ρ < 1."""
        return self.partial(i) + (1.0 + rho * (self.k[i] - 1.0)) * self.C[i]

    def targets(self) -> np.ndarray:
        return np.array([self.arm(i) for i in range(self.N)])

    def barycenter(self) -> np.ndarray:
        """Σ λ_i X_i with the laminate weights of the loop (equals P_1 = P)."""
        return (lambda_weights(self.k) @ self.targets().reshape(self.N, 4)).reshape(2, 2)

    def segment_distance(self, G: np.ndarray, rho: float = 1.0) -> tuple[float, int, float]:
        """(distance, i, t) to the nearest segment [P_i, arm_i(ρ)]."""
        best = (math.inf, -1, 0.0)
        for i in range(self.N):
            a, b = self.partial(i), self.arm(i, rho)
            d = b - a
            t = float(np.clip(np.sum((G - a) * d) / np.sum(d * d), 0.0, 1.0))
            dist = float(np.linalg.norm(G - a - t * d))
            # endpoints are shared by two segments: prefer the one with G in its interior
            if dist < best[0] - 1e-12 or (abs(dist - best[0]) <= 1e-12 and min(t, 1 - t) > min(best[2], 1 - best[2])):
                best = (dist, i, t)
        return best

    def to_json(self) -> dict[str, Any]:
        return {
            "P": self.P.tolist(),
            "C": self.C.tolist(),
            "k": self.k.tolist(),
            "normals": [[ec.fraction_to_str(a), ec.fraction_to_str(b)] for a, b in self.normals],
        }


def lambda_weights(k: Sequence[float]) -> np.ndarray:
    """Limit volume fractions of the iterated loop laminate started at P_1.

    Going around the loop from P_{N+1} = P_1 the leaf X_i receives the fraction
    (1/k_i)·Π_{j>i}(1 − 1/k_j) per round; summing the geometric series over rounds
    gives the weights, which equal the barycentric λ of the T_N.
    """
    k = np.asarray(k, float)
    N = len(k)
    w = np.empty(N)
    for i in range(N):
        w[i] = (1.0 / k[i]) * np.prod(1.0 - 1.0 / k[i + 1 :])
    return w / (1.0 - np.prod(1.0 - 1.0 / k))


# ---------------------------------------------------------------------------
# parameters and construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageParams:
    """Depth (number of loop rounds), targets, arm schedule ρ_k and tolerance schedule δ_k.

    ``rho[k]`` shortens the arms used in round k (1 = exact targets).  ``delta[k]`` is
    the tolerance with which a cell entering round k must lie on the segment family.
    ``transition_fraction`` sets the cutoff slope κ so that the transition layer
    occupies roughly that fraction of the in-level of each split cell.
    """

    depth: int
    chain: LaminateChain
    rho: tuple[float, ...] = ()
    delta: tuple[float, ...] = ()
    transition_fraction: float = 0.05
    max_transition_deviation: float | None = None
    periods: int | tuple[int, ...] = 1
    max_cells: int = 100_000
    min_area: float = 1e-12
    monotone_guard: bool = True

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValueError("depth must be ≥ 0")
        rho = self.rho or tuple([1.0] * self.depth)
        delta = self.delta or tuple(1e-5 * 2.0**-k for k in range(self.depth + 1))
        if len(rho) < self.depth or len(delta) < self.depth + 1:
            raise ValueError("schedules shorter than depth")
        if any(r <= 0 or r > 1 for r in rho) or any(b < a for a, b in zip(rho, rho[1:])):
            raise ValueError("ρ schedule must be nondecreasing in (0, 1]")
        if any(b >= a for a, b in zip(delta, delta[1:])):
            raise ValueError("δ schedule must be strictly decreasing")
        if not 0 < self.transition_fraction < 1:
            raise ValueError("transition fraction must lie in (0, 1)")
        periods = (self.periods,) if isinstance(self.periods, int) else tuple(self.periods)
        if not periods or any(p < 1 for p in periods):
            raise ValueError("need at least one period per split")
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "rho", tuple(rho))
        object.__setattr__(self, "delta", tuple(delta))

    @property
    def targets(self) -> np.ndarray:
        return self.chain.targets()

    def periods_at(self, step: int) -> int:
        """Sawtooth periods for the given global split step (the last entry repeats)."""
        return self.periods[min(step, len(self.periods) - 1)]


def initial_map(
    A0: Any,
    domain: Sequence[Point] | None = None,
    *,
    chain: LaminateChain | None = None,
    grid_level: int = 0,
    b0: Any = None,
    tol: float = 1e-9,
) -> PiecewiseAffineMap:
    """The affine map x ↦ A₀x + b₀ on Ω, cut into the 2·4^grid_level triangles of a dyadic grid (unit square).

    With a ``chain`` the datum must lie on the loop's segment family (otherwise no
    laminate starting from it can reach the targets); a :class:`DomainError` says how far it is.
    """
    A0 = np.asarray(A0, float)
    b0 = np.zeros(2) if b0 is None else np.asarray(b0, float)
    domain = list(domain) if domain is not None else unit_square()
    label: tuple[Any, ...] = ("A",)
    if chain is not None:
        scale_ = 1.0 + float(np.max(np.abs(chain.targets())))
        dK = min(float(np.linalg.norm(A0 - x)) for x in chain.targets())
        dist, i, t = chain.segment_distance(A0)
        if dK <= tol * scale_:
            label = ("X", int(np.argmin([np.linalg.norm(A0 - x) for x in chain.targets()])), 1.0)
        elif dist <= tol * scale_:
            label = ("S", i)
        else:
            raise DomainError(
                f"boundary gradient is {dist:.3g} away from the rank-one segments of the loop "
                f"and {dK:.3g} from the targets; no laminate started there reaches them"
            )
    if grid_level and domain != unit_square():
        raise ValueError("grid refinement is only defined on the unit square")
    polys: list[list[Point]] = []
    if grid_level == 0:
        polys = [domain]
    else:
        n = 2**grid_level
        for i in range(n):
            for j in range(n):
                x0, x1, y0, y1 = Q(i, n), Q(i + 1, n), Q(j, n), Q(j + 1, n)
                polys.append([(x0, y0), (x1, y0), (x1, y1)])
                polys.append([(x0, y0), (x1, y1), (x0, y1)])
    cells = [Cell(poly=p, grad=A0.copy(), offset=b0.copy(), label=label) for p in polys]
    return PiecewiseAffineMap(cells=cells, A0=A0, b0=b0, domain=domain)


def split_cell(
    cell: Cell,
    normal: tuple[Fraction, Fraction],
    theta: Fraction,
    a: np.ndarray,
    *,
    periods: int,
    transition_fraction: float,
    max_transition_deviation: float | None = None,
    transition_bound: float | None = None,
    targets: np.ndarray | None = None,
    leaf_label: tuple[Any, ...],
    remainder_label: tuple[Any, ...],
    transition_label: tuple[Any, ...],
) -> tuple[list[Cell], dict[str, float]]:
    """Replace u on the cell by u + a·min(s(n·x), κ·min_e ℓ_e(x)).

    s is the sawtooth with slopes 1−θ (fraction θ of each period) and −θ, so the
    laminate gradients are G + (1−θ)a⊗n (leaf) and G − θa⊗n (remainder).
    """
    nx, ny = normal
    poly = cell.poly
    G, off = cell.grad, cell.offset
    pv = [nx * x + ny * y for x, y in poly]
    pmin, pmax = min(pv), max(pv)
    h = _limit((pmax - pmin) / periods, DIRECTION_DENOMINATOR)
    if h <= 0:
        h = (pmax - pmin) / periods
    p0 = _snap_down(pmin)
    s_max = float(theta * (1 - theta) * h)
    dmax = _max_inner_level(poly)
    kappa_f = s_max / (transition_fraction * dmax)
    anorm = float(np.linalg.norm(a))
    capped = max_transition_deviation is not None and kappa_f * anorm > max_transition_deviation
    if capped:
        kappa_f = max_transition_deviation / anorm
    lines = [edge_line(poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly))]
    guarded = False
    if transition_bound is not None and targets is not None:
        en = np.array([[float(l_[0]), float(l_[1])] for l_ in lines])
        K4 = np.asarray(targets, float).reshape(-1, 4)

        def worst(kap: float) -> float:
            T = G.reshape(1, 4) + kap * np.einsum("i,ej->eij", a, en).reshape(len(en), 4)
            return float(kernels.min_dist_to_set(T, K4)[0].max())

        if worst(kappa_f) > transition_bound:
            guarded = True
            lo_k, hi_k = 0.0, kappa_f
            for _ in range(40):
                mid_k = 0.5 * (lo_k + hi_k)
                lo_k, hi_k = (mid_k, hi_k) if worst(mid_k) <= transition_bound else (lo_k, mid_k)
            kappa_f = max(lo_k, kappa_f * 2.0**-30)
    kappa = _limit(kappa_f, 2**12)
    if kappa <= 0 or (guarded and float(kappa) > kappa_f):
        kappa = Q(Fraction(kappa_f).limit_denominator(2**40)) if kappa_f > 0 else Q(1, 2**40)
    out: list[Cell] = []
    nfloat = np.array([float(nx), float(ny)])

    def new_cell(pp: list[Point], gphi: tuple[Fraction, Fraction], cphi: Fraction, label: tuple[Any, ...]) -> None:
        g = np.array([float(gphi[0]), float(gphi[1])])
        out.append(Cell(poly=pp, grad=G + np.outer(a, g), offset=off + a * float(cphi), label=label))

    fpoly = [(float(x), float(y)) for x, y in poly]
    flines = [(float(a_), float(b_), float(c_)) for a_, b_, c_ in lines]
    fk, fnx, fny = float(kappa), float(nx), float(ny)
    j = 0
    while p0 + j * h < pmax:
        lo, hi = p0 + j * h, p0 + (j + 1) * h
        mid = lo + theta * h
        parts = [
            (lo, mid, 1 - theta, -(1 - theta) * lo, leaf_label),
            (mid, hi, -theta, theta * hi, remainder_label),
        ]
        for plo, phi_, sig, const, lab in parts:
            fband = _fclip(_fclip(fpoly, fnx, fny, float(plo)), -fnx, -fny, -float(phi_))
            if not fband:
                continue
            band = clip_halfplane(poly, nx, ny, plo)
            band = clip_halfplane(band, -nx, -ny, -phi_)
            if not band:
                continue
            fsig, fconst = float(sig), float(const)
            # s(x) = sig·(n·x) + const; the sawtooth piece is where s ≤ κℓ_e for every e
            fsp = fband
            for enx, eny, ec_ in flines:
                fsp = _fclip(fsp, fk * enx - fsig * fnx, fk * eny - fsig * fny, fk * ec_ + fconst)
            if fsp:
                sp = band
                for enx, eny, ec_ in lines:
                    sp = clip_halfplane(sp, kappa * enx - sig * nx, kappa * eny - sig * ny, kappa * ec_ + const)
                    if not sp:
                        break
                if sp:
                    new_cell(sp, (sig * nx, sig * ny), const, lab)
            for e, (enx, eny, ec_) in enumerate(lines):
                fe = flines[e]
                fcp = _fclip(fband, fsig * fnx - fk * fe[0], fsig * fny - fk * fe[1], -fconst - fk * fe[2])
                for f_, fl in enumerate(flines):
                    if f_ != e and fcp:
                        fcp = _fclip(fcp, fl[0] - fe[0], fl[1] - fe[1], fl[2] - fe[2])
                if not fcp:
                    continue
                cp = clip_halfplane(band, sig * nx - kappa * enx, sig * ny - kappa * eny, -const - kappa * ec_)
                for f_, (gnx, gny, gc) in enumerate(lines):
                    if not cp:
                        break
                    if f_ != e:
                        cp = clip_halfplane(cp, gnx - enx, gny - eny, gc - ec_)
                if cp:
                    new_cell(cp, (kappa * enx, kappa * eny), -kappa * ec_, transition_label)
        j += 1
    stats = {"kappa": float(kappa), "capped": capped, "guarded": guarded, "s_max": s_max, "displacement": anorm * s_max}
    return out, stats


def refine(m: PiecewiseAffineMap, params: StageParams, stages: int | None = None) -> PiecewiseAffineMap:
    """Run ``stages`` rounds of the loop laminate (default ``params.depth``); stages = 0 returns the map unchanged.

    Active cells are those labelled ("S", i): their gradient lies on the segment
    [P_i, arm_i].  A split produces the leaf ("X", i, ρ) at arm_i(ρ) and the
    remainder ("S", i−1) at P_i; cutoff pieces are labelled ("T", round).  Leaves
    with shorter arms than the current round's ρ are re-activated.
    """
    stages = params.depth if stages is None else stages
    chain = params.chain
    N = chain.N
    cells = list(m.cells)
    history = list(m.history)
    done = len([h for h in history if h.get("kind") == "round"])
    for r in range(stages):
        rnd = done + r
        rho = params.rho[min(rnd, len(params.rho) - 1)] if params.rho else 1.0
        delta = params.delta[min(rnd, len(params.delta) - 1)]
        t0 = time.perf_counter()
        # re-activate leaves left at shorter arms
        for c in cells:
            if c.label[0] == "X" and c.label[2] < rho:
                c.label = ("S", c.label[1])
        # from the second round on, transition gradients may not exceed the current sup-distance
        bound = None
        if params.monotone_guard and rnd >= 1:
            G4 = np.array([c.grad for c in cells]).reshape(len(cells), 4)
            bound = float(kernels.min_dist_to_set(G4, params.targets.reshape(N, 4))[0].max())
        guarded = 0
        displacement = 0.0
        frozen_new = 0
        frozen_small = 0
        dom_area = float(polygon_area(m.domain))
        for step in range(N):
            nxt: list[Cell] = []
            for c in cells:
                if c.label[0] != "S":
                    nxt.append(c)
                    continue
                i = c.label[1]
                if float(c.area) < params.min_area * dom_area:
                    # below any resolution that matters for fractions or distances
                    c.label = ("R", i)
                    frozen_small += 1
                    nxt.append(c)
                    continue
                leaf = chain.arm(i, rho)
                base = chain.partial(i)
                dist, _, _ = _segment_dist(c.grad, base, leaf)
                tolr = delta * (1.0 + float(np.max(np.abs(leaf))))
                if dist > tolr:
                    raise StageFailure(
                        f"cell gradient is {dist:.3g} off the segment it should be split along",
                        {"round": rnd, "step": step, "segment": i, "distance": dist, "tolerance": tolr},
                    )
                d = leaf - base
                t_float = float(np.sum((c.grad - base) * d) / np.sum(d * d))
                if not 0.0 < t_float < 1.0:
                    raise StageFailure(
                        "cell gradient is at a segment end; no proper split",
                        {"round": rnd, "step": step, "segment": i, "t": t_float},
                    )
                theta = _limit(t_float, FRACTION_DENOMINATOR)
                nvec = chain.normals[i]
                nf = np.array([float(nvec[0]), float(nvec[1])])
                # a⊗n ≈ arm − base: both laminate gradients inherit G's offset from the
                # segment unchanged, so errors add up over steps instead of being amplified
                a = d @ nf / float(nf @ nf)
                pieces, st = split_cell(
                    c,
                    nvec,
                    theta,
                    a,
                    periods=params.periods_at(rnd * N + step),
                    transition_fraction=params.transition_fraction,
                    max_transition_deviation=params.max_transition_deviation,
                    transition_bound=bound,
                    targets=params.targets,
                    leaf_label=("X", i, rho),
                    remainder_label=("S", (i - 1) % N),
                    transition_label=("T", rnd),
                )
                displacement = max(displacement, st["displacement"])
                guarded += int(st["guarded"])
                frozen_new += sum(1 for p in pieces if p.label[0] == "T")
                nxt.extend(pieces)
            cells = nxt
            ntri = sum(len(c.poly) - 2 for c in cells)
            if ntri > params.max_cells:
                raise StageFailure(
                    f"cell budget exceeded ({ntri} triangles > {params.max_cells})",
                    {"round": rnd, "step": step, "triangles": ntri},
                )
        history.append(
            {
                "kind": "round",
                "round": rnd,
                "rho": rho,
                "delta": delta,
                "cells": len(cells),
                "triangles": sum(len(c.poly) - 2 for c in cells),
                "transition_cells_added": frozen_new,
                "remainders_frozen_below_min_area": frozen_small,
                "splits_with_guarded_cutoff": guarded,
                "transition_bound": bound,
                "max_displacement_per_step": displacement,
                "seconds": time.perf_counter() - t0,
            }
        )
    return PiecewiseAffineMap(cells=cells, A0=m.A0, b0=m.b0, domain=m.domain, history=history)


def _segment_dist(G: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[float, float, np.ndarray]:
    d = b - a
    t = float(np.clip(np.sum((G - a) * d) / np.sum(d * d), 0.0, 1.0))
    foot = a + t * d
    return float(np.linalg.norm(G - foot)), t, foot


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------


def _dyadic_square(level: int, i: int, j: int) -> list[Point]:
    n = 2**level
    return [(Q(i, n), Q(j, n)), (Q(i + 1, n), Q(j, n)), (Q(i + 1, n), Q(j + 1, n)), (Q(i, n), Q(j + 1, n))]


def _intersect(poly: Sequence[Point], sq: Sequence[Point]) -> list[Point]:
    out = list(poly)
    for i in range(len(sq)):
        out = clip_halfplane(out, *edge_line(sq[i], sq[(i + 1) % len(sq)]))
        if not out:
            return []
    return out


def analyze(
    m: PiecewiseAffineMap,
    K: Any,
    dyadic_depth: int = 0,
    *,
    hit_tol: float = HIT_TOL,
    lift: tuple[Any, Any, Any, Any] | None = None,
    lifted_targets: Any = None,
) -> dict[str, Any]:
    """Distances to K, exact area fractions (global and per dyadic square) and the lifted-map check.

    A cell *attains* target i when ‖Du − X_i‖ ≤ hit_tol·(1 + max|X|); fractions are
    reported for attained targets (plus the rest) and for nearest-target assignment.
    """
    K = np.asarray(K, float)
    nK = len(K)
    grads = m.gradients().reshape(len(m.cells), 4)
    dist, nearest = kernels.min_dist_to_set(grads, K.reshape(nK, 4))
    tol = hit_tol * (1.0 + float(np.max(np.abs(K))))
    attained = np.where(dist <= tol, nearest, -1)
    areas = m.areas()
    total = sum(areas, Q(0))
    dom_area = polygon_area(m.domain)
    frac_hit = [Q(0)] * (nK + 1)
    frac_near = [Q(0)] * nK
    for a, h_, nn in zip(areas, attained, nearest):
        frac_hit[h_ if h_ >= 0 else nK] += a / dom_area
        frac_near[nn] += a / dom_area
    af = np.array([float(a) for a in areas])
    interior = _interior_mask(m)
    report: dict[str, Any] = {
        "cells": len(m.cells),
        "triangles": m.n_triangles,
        "sup_distance": float(dist.max()),
        "sup_distance_interior": float(dist[interior].max()) if interior.any() else 0.0,
        "L1_distance": float(af @ dist / float(dom_area)),
        "area_total": _short_fraction(total),
        "area_fractions_attained": [float(f) for f in frac_hit[:nK]],
        "area_fraction_unattained": float(frac_hit[nK]),
        "area_fractions_nearest": [float(f) for f in frac_near],
        "fractions_sum_exact": sum(frac_hit, Q(0)) == 1 and sum(frac_near, Q(0)) == 1,
        "hit_tolerance": tol,
        "_fractions_attained": frac_hit,
        "_dist": dist,
    }
    if dyadic_depth > 0:
        report["dyadic"] = _dyadic_histograms(m, attained, nK, dyadic_depth)
    if lift is not None:
        report["lift"] = _lift_check(m, lift, lifted_targets, dist)
    return report


def _short_fraction(q: Fraction, digits: int = 200) -> str | float:
    """'p/q' when it is short enough to be useful, else the float."""
    if q.numerator.bit_length() + q.denominator.bit_length() <= digits * 3.3:
        return ec.fraction_to_str(q)
    return float(q)


def _interior_mask(m: PiecewiseAffineMap) -> np.ndarray:
    """Cells without a vertex on ∂Ω."""
    lines = [edge_line(m.domain[i], m.domain[(i + 1) % len(m.domain)]) for i in range(len(m.domain))]
    mask = np.ones(len(m.cells), bool)
    for ci, c in enumerate(m.cells):
        for x, y in c.poly:
            if any(nx * x + ny * y == cc for nx, ny, cc in lines):
                mask[ci] = False
                break
    return mask


def _dyadic_histograms(m: PiecewiseAffineMap, attained: np.ndarray, nK: int, depth: int) -> dict[str, Any]:
    areas = [c.area for c in m.cells]
    boxes = [
        (min(x for x, _ in c.poly), max(x for x, _ in c.poly), min(y for _, y in c.poly), max(y for _, y in c.poly))
        for c in m.cells
    ]
    levels = []
    for lev in range(1, depth + 1):
        n = 2**lev
        sq_area = Q(1, n * n)
        hists = {(i, j): [Q(0)] * (nK + 1) for i in range(n) for j in range(n)}
        for c, h_, a, (x0, x1, y0, y1) in zip(m.cells, attained, areas, boxes):
            slot = h_ if h_ >= 0 else nK
            i0, i1 = int(math.floor(x0 * n)), min(int(math.ceil(x1 * n)), n)
            j0, j1 = int(math.floor(y0 * n)), min(int(math.ceil(y1 * n)), n)
            if i1 - i0 == 1 and j1 - j0 == 1:
                hists[(i0, j0)][slot] += a / sq_area
                continue
            for i in range(i0, i1):
                for j in range(j0, j1):
                    inter = _intersect(c.poly, _dyadic_square(lev, i, j))
                    if inter:
                        hists[(i, j)][slot] += polygon_area(inter) / sq_area
        squares = [
            {
                "square": [i, j],
                "fractions": [float(f) for f in hist[:nK]],
                "unattained": float(hist[nK]),
                "targets_present": sum(1 for f in hist[:nK] if f > 0),
                "sum_exact": sum(hist, Q(0)) == 1,
            }
            for (i, j), hist in sorted(hists.items())
        ]
        levels.append(
            {
                "level": lev,
                "min_targets_present": min(s["targets_present"] for s in squares),
                "all_sums_exact": all(s["sum_exact"] for s in squares),
                "squares": squares,
            }
        )
    return {"levels": levels}


def _lift_check(m: PiecewiseAffineMap, lift: Sequence[Any], lifted_targets: Any, base_dist: np.ndarray) -> dict[str, Any]:
    """w = (u, Au + Bx, Cu + Dx) has Dw = (Du, A·Du + B, C·Du + D); compare with the stacked targets."""
    La, Lb, Lc, Ld = (np.asarray(v, float) for v in lift)
    T = np.asarray(lifted_targets, float)
    G = m.gradients()
    Dw = np.concatenate([G, La @ G + Lb, Lc @ G + Ld], axis=1)  # cells × 6 × 2
    ld, _ = kernels.min_dist_to_set(Dw.reshape(len(G), 12), T.reshape(len(T), 12))
    op = float(np.sqrt(np.linalg.eigvalsh(np.eye(2) + La.T @ La + Lc.T @ Lc).max()))
    # lifted targets are exact lifts, so dist(Dw, lifted K) ≤ op · dist(Du, K)
    ratio_ok = bool(np.all(ld <= op * base_dist + 1e-12))
    return {
        "sup_lifted_distance": float(ld.max()),
        "operator_norm": op,
        "within_operator_bound": ratio_ok,
        "target_lift_defect": float(
            max(
                np.max(np.abs(T[i] - np.concatenate([X, La @ X + Lb, Lc @ X + Ld])))
                for i, X in enumerate(T[:, :2, :])
            )
        ),
    }


def public_report(report: dict[str, Any]) -> dict[str, Any]:
    """Drop the private (underscore) numpy entries so the report serialises."""
    return {k: v for k, v in report.items() if not k.startswith("_")}


# ---------------------------------------------------------------------------
# counterexample pipeline
# ---------------------------------------------------------------------------


def counterexample_chain(perm_index: int = 0, seed: int = 0) -> tuple[LaminateChain, list[int]]:
    """Loop data for one of the T₅ orderings of the built-in five matrices."""
    from .counterexample import load_builtin
    from .tn_algebra import detect_tn

    data = load_builtin()
    perm = data.permutations[perm_index]
    Xs = [data.X[p - 1] for p in perm]
    found = detect_tn(Xs, seed=seed)
    if found is None:  # pragma: no cover - the witnesses are known to exist
        raise RuntimeError("no T5 witness found")
    return LaminateChain.from_witness(found[0]), perm


#: split periods for the first round (the remainder lineage multiplies by these), then single periods
DEFAULT_PERIODS = (8, 4, 2, 2, 1)


def build_counterexample_map(
    depth: int,
    *,
    perm_index: int = 0,
    grid_level: int = 0,
    transition_fraction: float = 0.05,
    periods: int | tuple[int, ...] = DEFAULT_PERIODS,
    seed: int = 0,
    max_cells: int = 100_000,
    min_area: float = 1e-12,
) -> tuple[PiecewiseAffineMap, StageParams, list[int]]:
    """Barycenter boundary datum on the unit square, ``depth`` rounds of the loop laminate."""
    chain, perm = counterexample_chain(perm_index, seed)
    params = StageParams(
        depth=depth,
        chain=chain,
        transition_fraction=transition_fraction,
        periods=periods,
        max_cells=max_cells,
        min_area=min_area,
    )
    m0 = initial_map(chain.barycenter(), chain=chain, grid_level=grid_level)
    return refine(m0, params), params, perm
