"""The explicit five-point sign-changing configuration and its smooth polyconvex integrand."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import exact_core as ec
from . import kernels
from .exact_core import Matrix, MultiIndexPair, PreconditionError
from .inclusion import J_ROT, InclusionPoint, qij_report
from .tn_algebra import TNConfig, check_tn, detect_tn

F = Fraction

_A_ROWS = [
    [[F(8, 5), F(-2)], [F(-2), F(8, 5)], [F(-8, 1137), F(7361, 454800)], [F(267, 151600), F(8, 1137)],
     [F(-3361, 227400), F(3361, 284250)], [F(4801, 284250), F(-4801, 227400)]],
    [[F(8, 5), F(2)], [F(2), F(8, 5)], [F(8, 1137), F(7361, 454800)], [F(267, 151600), F(-8, 1137)],
     [F(3361, 227400), F(3361, 284250)], [F(4801, 284250), F(4801, 227400)]],
    [[F(2, 5), F(0)], [F(0), F(-18, 5)], [F(0), F(-959, 454800)], [F(907, 151600), F(0)],
     [F(0), F(-10083, 379000)], [F(4801, 1137000), F(0)]],
    [[F(-18, 5), F(0)], [F(0), F(2, 5)], [F(0), F(5441, 454800)], [F(9121, 454800), F(0)],
     [F(0), F(3361, 1137000)], [F(-14403, 379000), F(0)]],
    [[F(3, 4), F(0)], [F(0), F(3, 4)], [F(0), F(6001, 454800)], [F(2161, 454800), F(0)],
     [F(0), F(3361, 606400)], [F(4801, 606400), F(0)]],
]


@dataclass
class CounterexampleData:
    A: list[Matrix]
    beta: list[Fraction]
    c: list[Fraction]
    d: list[Fraction]
    lift_A: Matrix
    lift_B: Matrix
    lift_C: Matrix
    lift_D: Matrix
    permutations: list[list[int]]

    @property
    def X(self) -> list[Matrix]:
        return [ec.block(a, 0, 2) for a in self.A]

    @property
    def Y(self) -> list[Matrix]:
        return [ec.block(a, 2, 4) for a in self.A]

    @property
    def Z(self) -> list[Matrix]:
        return [ec.block(a, 4, 6) for a in self.A]

    def points(self) -> list[InclusionPoint]:
        d_key = MultiIndexPair((0, 1), (0, 1))
        return [
            InclusionPoint(X=x, Y=y, Z=z, beta=b, c=c, dZ={d_key: d})
            for x, y, z, b, c, d in zip(self.X, self.Y, self.Z, self.beta, self.c, self.d)
        ]

    def to_json(self) -> dict[str, Any]:
        s = ec.fraction_to_str
        return {
            "A": [ec.matrix_to_json(a) for a in self.A],
            "beta": [s(b) for b in self.beta],
            "c": [s(v) for v in self.c],
            "d": [s(v) for v in self.d],
            "lift": {k: ec.matrix_to_json(getattr(self, "lift_" + k)) for k in "ABCD"},
            "permutations": self.permutations,
        }


def load_builtin() -> CounterexampleData:
    """The five 6×2 rational matrices with their multiplicities, values and minor derivatives."""
    return CounterexampleData(
        A=[[list(r) for r in a] for a in _A_ROWS],
        beta=[F(2), F(5), F(10), F(1), F(2)],
        c=[F(0), F(0), F(-2929, 1137000), F(5233, 113700), F(-33, 15160)],
        d=[F(-1204, 828115), F(0), F(-1309, 454800), F(-10097, 2546880), F(0)],
        lift_A=[[F(0), F(4, 1137)], [F(-4, 1137), F(0)]],
        lift_B=[[F(0), F(4801, 454800)], [F(3361, 454800), F(0)]],
        lift_C=[[F(0), F(3361, 454800)], [F(4801, 454800), F(0)]],
        lift_D=[[F(0), F(0)], [F(0), F(0)]],
        permutations=[[1, 2, 3, 5, 4], [1, 2, 4, 5, 3], [1, 2, 5, 3, 4]],
    )


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def verify_conditions(data: CounterexampleData, *, seed: int = 0) -> dict[str, Any]:
    """Pairwise negativity, T₅ structure of the permuted X's, affine lift and the lifted T₅."""
    t0 = time.perf_counter()
    pts = data.points()
    q = qij_report(pts, variant="curl")
    Q = q.pop("_Q")
    negativity = {
        "passed": q["all_negative"],
        "Q": q["Q"],
        "violations": [(v["i"], v["j"]) for v in q["verdicts"] if not v["negative"]],
        "max_offdiag": q["max_offdiag"],
        "seconds": time.perf_counter() - t0,
    }

    t0 = time.perf_counter()
    affine_lift_fail: list[str] = []
    for i, (X, Y, Z, b, c) in enumerate(zip(data.X, data.Y, data.Z, data.beta, data.c), start=1):
        if ec.add(ec.matmul(data.lift_A, X), data.lift_B) != Y:
            affine_lift_fail.append(f"Y_{i} != A X_{i} + B")
        if ec.add(ec.matmul(data.lift_C, X), data.lift_D) != Z:
            affine_lift_fail.append(f"Z_{i} != C X_{i} + D")
        if ec.sub(ec.matmul(ec.transpose(X), Y), ec.scale(b * c, J_ROT)) != Z:
            affine_lift_fail.append(f"Z_{i} != X_{i}^T Y_{i} - beta_{i} c_{i} J")
        if X != ec.transpose(X):
            affine_lift_fail.append(f"X_{i} not symmetric")
    affine_lift = {"passed": not affine_lift_fail, "failures": affine_lift_fail, "seconds": time.perf_counter() - t0}

    t0 = time.perf_counter()
    witnesses: dict[str, Any] = {}
    per_point_C: list[list[np.ndarray]] = [[] for _ in data.X]
    orderings_fail: list[str] = []
    lifted: dict[str, Any] = {}
    for perm in data.permutations:
        key = "".join(map(str, perm))
        Xs = [data.X[p - 1] for p in perm]
        found = detect_tn(Xs, seed=seed)
        if found is None:
            orderings_fail.append(f"no T5 witness for permutation {perm}")
            witnesses[key] = None
            continue
        wit, rep = found
        witnesses[key] = {"mu": rep["mu"], "lambda": rep["lambda"], "k": wit.k, "residual": rep["tt_residual"]}
        for pos, p in enumerate(perm):
            per_point_C[p - 1].append(np.asarray(wit.C[pos], float).ravel())
        lifted[key] = _lifted_check(data, perm, wit)
        if not lifted[key]["passed"]:
            orderings_fail.append(f"lifted T5 failed for permutation {perm}")
    ranks = []
    for i, cs in enumerate(per_point_C, start=1):
        if len(cs) != 3:
            ranks.append(None)
            continue
        sv = np.linalg.svd(np.vstack([c / np.linalg.norm(c) for c in cs]), compute_uv=False)
        r = int(np.sum(sv > 1e-8))
        ranks.append(r)
        if r != 3:
            orderings_fail.append(f"C-matrices at point {i} have rank {r} < 3")
    orderings = {
        "passed": not orderings_fail,
        "failures": orderings_fail,
        "witnesses": witnesses,
        "ranks": ranks,
        "seconds": time.perf_counter() - t0,
    }
    return {
        "negativity": negativity,
        "orderings": orderings,
        "affine_lift": affine_lift,
        "lifted_T5": {"passed": bool(lifted) and all(v["passed"] for v in lifted.values()), "per_permutation": lifted},
        "passed": negativity["passed"] and orderings["passed"] and affine_lift["passed"],
        "_Q": Q,
    }


def _lifted_check(data: CounterexampleData, perm: Sequence[int], wit: TNConfig) -> dict[str, Any]:
    """Lift the X-witness through X ↦ (X, AX+B, CX+D) and check it against the stacked A_i."""
    P = np.asarray(wit.P, float)
    La, Lb, Lc, Ld = (np.asarray(getattr(data, "lift_" + k), float) for k in "ABCD")
    Pl = np.vstack([P, La @ P + Lb, Lc @ P + Ld])
    Cl = [np.vstack([C, La @ C, Lc @ C]) for C in (np.asarray(c, float) for c in wit.C)]
    lw = TNConfig(P=Pl.tolist(), C=[c.tolist() for c in Cl], k=list(wit.k))
    targets = [np.asarray(data.A[p - 1], float).tolist() for p in perm]
    rep = check_tn(targets, lw, tol=1e-8)
    return {"passed": rep["passed"], "residual": rep["residual"], "failures": rep["failures"]}


# ---------------------------------------------------------------------------
# smooth maximum
# ---------------------------------------------------------------------------


def smooth_abs(x: np.ndarray, w: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """|·| mollified by the biweight kernel of half-width w: value, first and second derivative.

    Equals |x| for |x| ≥ w; C² and convex; ψ(0) = 5w/16.
    """
    x = np.asarray(x, dtype=float)
    u = np.clip(x / w, -1.0, 1.0)
    inside = np.abs(x) < w
    u2 = u * u
    v = np.where(inside, w * (5 / 16 + (15 / 8) * (u2 / 2 - u2 * u2 / 6 + u2**3 / 30)), np.abs(x))
    d1 = np.where(inside, (15 / 8) * (u - 2 * u * u2 / 3 + u * u2 * u2 / 5), np.sign(x))
    d2 = np.where(inside, (15 / (8 * w)) * (1 - u2) ** 2, 0.0)
    return v, d1, d2


def smooth_max(a: np.ndarray, b: np.ndarray, w: float) -> np.ndarray:
    """m(a, b) = (a + b + |a − b|_w)/2; equals max(a, b) whenever |a − b| ≥ w."""
    return (a + b + smooth_abs(a - b, w)[0]) / 2


def _smax_full(a, ga, Ha, b, gb, Hb, w):
    """Smooth max with gradients (P×D) and Hessians (P×D×D) propagated by the chain rule."""
    v, d1, d2 = smooth_abs(a - b, w)
    val = (a + b + v) / 2
    wa, wb = (1 + d1) / 2, (1 - d1) / 2
    grad = wa[:, None] * ga + wb[:, None] * gb
    diff = ga - gb
    hess = None
    if Ha is not None:
        hess = wa[:, None, None] * Ha + wb[:, None, None] * Hb + (d2 / 2)[:, None, None] * diff[:, :, None] * diff[:, None, :]
    return val, grad, hess


# ---------------------------------------------------------------------------
# the built integrand
# ---------------------------------------------------------------------------


def lift_point(X: Any) -> np.ndarray:
    """(X₁₁, X₁₂, X₂₁, X₂₂, det X) for one 2×2 matrix or an array of them (…×2×2)."""
    X = np.asarray(X, dtype=float)
    d = X[..., 0, 0] * X[..., 1, 1] - X[..., 0, 1] * X[..., 1, 0]
    return np.concatenate([X.reshape(X.shape[:-2] + (4,)), d[..., None]], axis=-1)


def _cof(X: np.ndarray) -> np.ndarray:
    """Gradient of det on 2×2 matrices: [[x₂₂, −x₂₁], [−x₁₂, x₁₁]]."""
    return np.array([[X[1, 1], -X[1, 0]], [-X[0, 1], X[0, 0]]])


@dataclass
class BuiltIntegrand:
    """h(z) = ε·a(z) + m(M·a(z) − L, g₂(z)) on z = (X, d) ∈ R⁵ and f(X) = h(X, det X).

    g₂ is the nested smooth maximum of the affine pieces l_i(z) = ⟨grads_i, z⟩ + offsets_i.
    """

    epsilon: float
    sigma: float
    delta: float
    R: float
    R2: float
    M: float
    L: float
    Cbound: float
    grads: np.ndarray
    offsets: np.ndarray
    anchors: np.ndarray
    c_exact: list[Fraction]
    variant_d: str
    width_inner: float
    width_outer: float
    mollifier_radius: float
    quad_nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    certificates: list[dict[str, Any]] = field(default_factory=list)
    Qeps: np.ndarray | None = None

    # -- pieces -----------------------------------------------------------
    def l_values(self, Z: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Z) @ self.grads.T + self.offsets

    def g1(self, Z: np.ndarray) -> np.ndarray:
        return self.l_values(Z).max(axis=1)

    def g2(self, Z: np.ndarray, hessian: bool = False):
        Z = np.atleast_2d(np.asarray(Z, float))
        P, D = Z.shape
        lv = self.l_values(Z)
        zero_H = np.zeros((P, D, D)) if hessian else None
        val = lv[:, 0]
        grad = np.broadcast_to(self.grads[0], (P, D)).copy()
        H = zero_H
        for k in range(1, len(self.offsets)):
            gk = np.broadcast_to(self.grads[k], (P, D))
            val, grad, H = _smax_full(val, grad, H, lv[:, k], gk, zero_H, self.width_inner)
        return val, grad, H

    def g2_quadrature(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Radial mollification ρ_r ⋆ g₁ by fixed antithetic quadrature (cross-check only)."""
        Z = np.atleast_2d(np.asarray(Z, float))
        return kernels.quad_max_affine(Z, self.grads, self.offsets, self.quad_nodes, self.quad_weights)

    def F(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return self.M * np.sqrt(1 + np.sum(Z * Z, axis=1)) - self.L

    # -- h and its derivatives -------------------------------------------
    def h(self, Z: np.ndarray, derivatives: int = 0):
        """h on points (P×5); derivatives = 0, 1 or 2 adds gradient / Hessian."""
        Z = np.atleast_2d(np.asarray(Z, float))
        P, D = Z.shape
        a = np.sqrt(1 + np.sum(Z * Z, axis=1))
        ga = Z / a[:, None]
        Ha = None
        if derivatives >= 2:
            Ha = (np.eye(D)[None] - ga[:, :, None] * ga[:, None, :]) / a[:, None, None]
        v2, g2g, H2 = self.g2(Z, hessian=derivatives >= 2)
        Fv = self.M * a - self.L
        gv, gg, gH = _smax_full(Fv, self.M * ga, None if Ha is None else self.M * Ha, v2, g2g, H2, self.width_outer)
        val = self.epsilon * a + gv
        if derivatives == 0:
            return val
        grad = self.epsilon * ga + gg
        if derivatives == 1:
            return val, grad
        return val, grad, self.epsilon * Ha + gH

    def g(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, float))
        return self.h(Z) - self.epsilon * np.sqrt(1 + np.sum(Z * Z, axis=1))

    def f(self, X: Any) -> float:
        return float(eval_integrand(self, X)[0])

    def df(self, X: Any) -> np.ndarray:
        return eval_integrand(self, X)[1]

    def report(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "delta": self.delta,
            "R": self.R,
            "R2": self.R2,
            "M": self.M,
            "L": self.L,
            "C_bound": self.Cbound,
            "variant_d": self.variant_d,
            "smooth_max_width_inner": self.width_inner,
            "smooth_max_width_outer": self.width_outer,
            "mollifier_radius": self.mollifier_radius,
            "pieces": [{"grad": g.tolist(), "offset": float(o)} for g, o in zip(self.grads, self.offsets)],
            "tail": {"M_tail": self.epsilon + self.M, "L_tail": self.L, "R_tail": 2 * self.R2},
            "certificates": self.certificates,
        }


def _area_data(X: np.ndarray) -> tuple[float, np.ndarray, float]:
    """(𝒜(X), full derivative D𝒜(X), ∂_d a at (X, det X))."""
    d = X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]
    A = math.sqrt(1 + float(np.sum(X * X)) + d * d)
    return A, (X + d * _cof(X)) / A, d / A


def perturbed_q(data: CounterexampleData, eps: float) -> np.ndarray:
    """Q^ε_ij = Q_ij + ε·(a(z_j) − a(z_i) − ⟨Da(z_i), z_j − z_i⟩) in floats."""
    Q = qij_report(data.points(), "curl")["_Q"]
    Z = lift_point(np.array([np.asarray(x, float) for x in data.X]))
    a = np.sqrt(1 + np.sum(Z * Z, axis=1))
    N = len(Z)
    out = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            if i != j:
                gap = a[j] - a[i] - float(Z[i] @ (Z[j] - Z[i])) / a[i]
                out[i, j] = float(Q[i][j]) + eps * gap
    return out


def _pieces(data: CounterexampleData, eps: float, variant_d: str) -> tuple[np.ndarray, np.ndarray]:
    grads, offs = [], []
    for X_, Y_, b, c, d in zip(data.X, data.Y, data.beta, data.c, data.d):
        X = np.asarray(X_, float)
        Y = np.asarray(Y_, float)
        A, DA, dda = _area_data(X)
        ceps = float(c) - eps * A
        Yeps = Y - eps * float(b) * DA @ np.asarray(J_ROT, float)
        G = -(Yeps @ np.asarray(J_ROT, float)) / float(b)  # = Df(X_i) − ε D𝒜(X_i)
        de = float(d) - eps * dda if variant_d == "d_eps" else float(d)
        gX = G - de * _cof(X)
        detX = float(np.linalg.det(X))
        grads.append(np.append(gX.ravel(), de))
        offs.append(ceps - float(np.sum(gX * X)) - de * detX)
    return np.array(grads), np.array(offs)


def _quadrature_nodes(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """2^k antithetic points in the unit 5-ball with biweight radial weights (normalized)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    out: list[np.ndarray] = []
    while sum(len(o) for o in out) < half:
        y = rng.uniform(-1, 1, size=(4 * half, 5))
        out.append(y[np.sum(y * y, axis=1) < 1])
    y = np.concatenate(out)[:half]
    nodes = np.vstack([y, -y])
    w = (1 - np.sum(nodes * nodes, axis=1)) ** 2
    return nodes, w / w.sum()


def build_integrand(
    data: CounterexampleData | None = None,
    epsilon: float | None = None,
    *,
    quad_nodes: int = 2**14,
    seed: int = 0,
) -> BuiltIntegrand:
    """Construct the smooth polyconvex integrand whose C_f contains the five lifted points."""
    data = data or load_builtin()
    Q = qij_report(data.points(), "curl")["_Q"]
    if any(Q[i][j] >= 0 for i in range(5) for j in range(5) if i != j):
        raise PreconditionError("pairwise negativity fails; no integrand can be built")
    if epsilon is None:
        for k in range(60):
            e = 2.0**-k
            if np.max(perturbed_q(data, e) + np.eye(5) * -1e300) < 0:
                epsilon = e
                break
        else:  # pragma: no cover - would contradict strict negativity
            raise PreconditionError("no admissible epsilon found")
    Qe = perturbed_q(data, epsilon)
    off = ~np.eye(5, dtype=bool)
    if not np.all(Qe[off] < 0):
        raise PreconditionError(f"epsilon={epsilon} breaks strict negativity")
    sigma = float(-Qe[off].max())

    anchors = lift_point(np.array([np.asarray(x, float) for x in data.X]))
    # adopt the d-variant under which l_i(z_j) = c^ε_j + Q^ε_ij holds
    variant_errors = {}
    for variant in ("d_eps", "d"):
        g_, o_ = _pieces(data, epsilon, variant)
        lz = anchors @ g_.T + o_  # lz[j, i] = l_i(z_j)
        A = np.sqrt(1 + np.sum(anchors * anchors, axis=1))
        ceps = np.array([float(c) for c in data.c]) - epsilon * A
        err = max(abs(lz[j, i] - ceps[j] - Qe[i, j]) for i in range(5) for j in range(5) if i != j)
        variant_errors[variant] = float(err)
    variant_d = min(variant_errors, key=variant_errors.get)
    grads, offsets = _pieces(data, epsilon, variant_d)

    certificates: list[dict[str, Any]] = []
    slope = max(float(np.linalg.norm(grads[i] - grads[j])) for i in range(5) for j in range(5) if i != j)
    delta = sigma / (2 * slope)
    width_inner = sigma / 16
    for j in range(5):
        lz = grads @ anchors[j] + offsets
        margin = float(lz[j] - np.max(np.delete(lz, j)))
        certificates.append(
            {
                "anchor": j + 1,
                "margin": margin,
                "slope_bound": slope,
                "radius": delta,
                "certified_margin_on_ball": margin - slope * delta,
                "single_piece": bool(margin - slope * delta >= width_inner * (1 + 4 * 5 / 32)),
            }
        )

    Cbound = float(np.max(np.linalg.norm(grads, axis=1)))
    M = Cbound + 1
    R = 2 * float(np.max(np.linalg.norm(anchors[:, :4], axis=1) + np.abs(anchors[:, 4]))) + 1
    width_outer = 1.0
    lmax0 = float(np.max(np.abs(offsets)))
    L = M * math.sqrt(1 + R * R) + Cbound * R + lmax0 + width_outer + 1
    R2 = L + lmax0 + width_inner + width_outer + 1
    nodes, weights = _quadrature_nodes(quad_nodes, seed)
    r_moll = delta / 4
    b = BuiltIntegrand(
        epsilon=float(epsilon),
        sigma=sigma,
        delta=delta,
        R=R,
        R2=R2,
        M=M,
        L=L,
        Cbound=Cbound,
        grads=grads,
        offsets=offsets,
        anchors=anchors,
        c_exact=list(data.c),
        variant_d=variant_d,
        width_inner=width_inner,
        width_outer=width_outer,
        mollifier_radius=r_moll,
        quad_nodes=nodes * r_moll,
        quad_weights=weights,
        certificates=certificates,
        Qeps=Qe,
    )
    b.certificates.append({"variant_errors": variant_errors})
    b.certificates.append(_ball_certificates(b))
    return b


def _ball_certificates(b: BuiltIntegrand) -> dict[str, Any]:
    """Separation of F and g₂: F ≤ g₂ − w on B_R and F ≥ g₂ + w outside B_{R₂} (a priori bounds)."""
    lmax0 = float(np.max(np.abs(b.offsets)))
    inner_gap = b.L - b.M * math.sqrt(1 + b.R**2) - b.Cbound * b.R - lmax0
    outer_gap = b.R2 - b.L - lmax0 - b.width_inner
    return {
        "inner_gap": inner_gap,
        "outer_gap_at_R2": outer_gap,
        "F_below_g2_on_B_R": bool(inner_gap >= b.width_outer),
        "F_above_g2_outside_B_R2": bool(outer_gap >= b.width_outer),
    }


def _anchor_index(b: BuiltIntegrand, z: np.ndarray) -> int | None:
    for j, cert in enumerate(b.certificates[:5]):
        if cert.get("single_piece") and np.linalg.norm(z - b.anchors[j]) <= b.delta:
            return j
    return None


def eval_integrand(b: BuiltIntegrand, X: Any) -> tuple[float, np.ndarray]:
    """f and Df at a 2×2 matrix.

    Inside a certified anchor ball f = ε(𝒜(X) − 𝒜(X_j)) + c_j + affine terms, so
    f(X_j) = c_j with no rounding beyond float(c_j); elsewhere the closed-form smooth max.
    """
    X = np.asarray(X, dtype=float)
    z = lift_point(X)
    cof = _cof(X)
    j = _anchor_index(b, z)
    if j is not None:
        A, DA, _ = _area_data(X)
        Aj = math.sqrt(1 + float(b.anchors[j] @ b.anchors[j]))
        dz = z - b.anchors[j]
        val = b.epsilon * (A - Aj) + float(b.c_exact[j]) + float(b.grads[j] @ dz)
        gz = b.grads[j]
        grad = b.epsilon * DA + gz[:4].reshape(2, 2) + gz[4] * cof
        return val, grad
    val, gz = b.h(z[None], derivatives=1)
    gz = gz[0]
    return float(val[0]), gz[:4].reshape(2, 2) + gz[4] * cof


def eval_integrand_many(b: BuiltIntegrand, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized f, Df for an array of 2×2 matrices (…×2×2) using the closed-form smooth max."""
    Xs = np.asarray(Xs, float)
    shp = Xs.shape[:-2]
    Xf = Xs.reshape(-1, 2, 2)
    Z = lift_point(Xf)
    val, gz = b.h(Z, derivatives=1)
    cof = np.stack([np.stack([Xf[:, 1, 1], -Xf[:, 1, 0]], -1), np.stack([-Xf[:, 0, 1], Xf[:, 0, 0]], -1)], -2)
    grad = gz[:, :4].reshape(-1, 2, 2) + gz[:, 4, None, None] * cof
    return val.reshape(shp), grad.reshape(shp + (2, 2))


def build_report(b: BuiltIntegrand, data: CounterexampleData | None = None) -> dict[str, Any]:
    """Build report plus the interpolation checks at the anchors."""
    data = data or load_builtin()
    rows = []
    for j, (X, Y, beta) in enumerate(zip(data.X, data.Y, data.beta)):
        val, grad = eval_integrand(b, np.asarray(X, float))
        Yrec = float(beta) * grad @ np.asarray(J_ROT, float)
        rows.append(
            {
                "i": j + 1,
                "f": val,
                "c": ec.fraction_to_str(data.c[j]),
                "value_error": abs(val - float(data.c[j])),
                "Y_error": float(np.max(np.abs(Yrec - np.asarray(Y, float)))),
            }
        )
    rep = b.report()
    rep["anchors"] = rows
    return rep
