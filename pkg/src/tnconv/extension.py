"""Perspective and smallest convex extensions of convex integrands, Ψ and ellipticity tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Literal

import numpy as np

from .multivector import MultiVector, graph_frame, phi_coords

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class Tail:
    """h(z) = M·√(1+‖z‖²) − L for ‖z‖ ≥ R."""

    M: float
    L: float
    R: float


@dataclass
class ConvexModel:
    """Convex h: R^k → R with vectorized evaluators on arrays of shape (P, k)."""

    k: int
    value: ArrayFn
    gradient: ArrayFn
    tail: Tail | None = None
    intercept_fn: ArrayFn | None = None

    def intercept(self, Z: np.ndarray) -> np.ndarray:
        """h(w) − ⟨Dh(w), w⟩, with the tail formula M/√(1+‖w‖²) − L used where it applies."""
        Z = np.atleast_2d(np.asarray(Z, float))
        if self.intercept_fn is not None:
            return self.intercept_fn(Z)
        out = self.value(Z) - np.sum(self.gradient(Z) * Z, axis=1)
        if self.tail is not None:
            nz = np.linalg.norm(Z, axis=1)
            far = nz >= self.tail.R
            out = np.where(far, self.tail.M / np.sqrt(1 + nz * nz) - self.tail.L, out)
        return out


def model_from_function(k: int, fun: Callable[[np.ndarray], float], tail: Tail | None = None) -> ConvexModel:
    """Wrap a scalar function; gradient by central differences (used for small test models)."""

    def value(Z: np.ndarray) -> np.ndarray:
        return np.array([fun(z) for z in np.atleast_2d(Z)])

    def gradient(Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        out = np.zeros_like(Z, dtype=float)
        for p, z in enumerate(Z):
            hstep = 1e-6 * (1 + np.linalg.norm(z))
            for i in range(k):
                e = np.zeros(k)
                e[i] = hstep
                out[p, i] = (fun(z + e) - fun(z - e)) / (2 * hstep)
        return out

    return ConvexModel(k, value, gradient, tail)


def tail_model(k: int, M: float, L: float) -> ConvexModel:
    """h(z) = M√(1+‖z‖²) − L (tail valid everywhere)."""

    def value(Z):
        Z = np.atleast_2d(Z)
        return M * np.sqrt(1 + np.sum(Z * Z, axis=1)) - L

    def gradient(Z):
        Z = np.atleast_2d(Z)
        return M * Z / np.sqrt(1 + np.sum(Z * Z, axis=1))[:, None]

    def intercept(Z):
        Z = np.atleast_2d(Z)
        return M / np.sqrt(1 + np.sum(Z * Z, axis=1)) - L

    return ConvexModel(k, value, gradient, Tail(M, L, 0.0), intercept)


# column-major (X₁₁, X₂₁, X₁₂, X₂₂, d) ↔ row-major (X₁₁, X₁₂, X₂₁, X₂₂, d)
_CM_TO_RM = np.array([0, 2, 1, 3, 4])


def model_from_integrand(b: Any) -> ConvexModel:
    """The convex h of a built integrand, in the coordinate order produced by ``phi_coords``."""

    def value(Z):
        Z = np.atleast_2d(np.asarray(Z, float))
        return b.h(Z[:, _CM_TO_RM])

    def gradient(Z):
        Z = np.atleast_2d(np.asarray(Z, float))
        g = b.h(Z[:, _CM_TO_RM], derivatives=1)[1]
        out = np.empty_like(g)
        out[:, _CM_TO_RM] = g
        return out

    return ConvexModel(5, value, gradient, Tail(b.epsilon + b.M, b.L, 2 * b.R2))


# ---------------------------------------------------------------------------
# recession function and the extension
# ---------------------------------------------------------------------------


def recession(h: ConvexModel, z: Any) -> dict[str, Any]:
    """h*(z) = lim_{y→0⁺} y·h(z/y): closed form M‖z‖ with a tail, else a Richardson-checked limit."""
    z = np.asarray(z, float)
    nz = float(np.linalg.norm(z))
    if nz == 0:
        return {"value": 0.0, "converged": True, "method": "homogeneity"}
    if h.tail is not None:
        return {"value": h.tail.M * nz, "converged": True, "method": "tail"}
    ys = 2.0 ** -np.arange(8, 34, 2)
    vals = np.array([y * h.value((z / y)[None])[0] for y in ys])
    rich = 2 * vals[1:] - vals[:-1]  # first-order Richardson in y
    diffs = np.abs(np.diff(rich))
    converged = bool(np.all(np.isfinite(vals)) and diffs[-1] <= 1e-6 * (1 + abs(rich[-1])))
    return {"value": float(rich[-1]) if converged else None, "converged": converged, "method": "limit", "trace": vals.tolist()}


def lambda_value(h: ConvexModel, samples: int = 4000, seed: int = 0) -> dict[str, Any]:
    """λ = inf h − ⟨Dh, ·⟩: −L under a tail declaration, cross-checked by sampling."""
    rng = np.random.default_rng(seed)
    R = h.tail.R if h.tail else 10.0
    Z = rng.normal(size=(samples, h.k))
    Z *= (rng.uniform(size=(samples, 1)) ** (1 / h.k)) * (2 * R + 1) / np.linalg.norm(Z, axis=1, keepdims=True)
    sampled = float(np.min(h.intercept(Z)))
    out: dict[str, Any] = {"sampled_inf_inside": sampled}
    if h.tail is not None:
        out["lambda"] = -h.tail.L
        out["consistent"] = sampled >= -h.tail.L - 1e-9
    else:
        far = float(np.min(h.intercept(Z * 1e6)))
        out["lambda"] = min(sampled, far)
        out["consistent"] = True
    return out


@dataclass
class ExtendedG:
    """𝒢 on R^{k+1}: t·h(z/t) for t > 0, h*(z) at t = 0, h*(z) + λt for t < 0."""

    source: ConvexModel
    lam: float
    mode: Literal["closed_form", "sup_oracle"] = "closed_form"

    def __call__(self, p: Any) -> np.ndarray:
        P = np.atleast_2d(np.asarray(p, float))
        if self.mode == "sup_oracle":
            return sup_oracle(self.source, P)
        return closed_form(self.source, P, self.lam)


def closed_form(h: ConvexModel, P: np.ndarray, lam: float) -> np.ndarray:
    if h.tail is None:
        raise ValueError("closed form requires a tail declaration")
    P = np.atleast_2d(np.asarray(P, float))
    z, t = P[:, :-1], P[:, -1]
    nz = np.linalg.norm(z, axis=1)
    out = h.tail.M * nz + lam * t
    pos = t > 0
    if np.any(pos):
        out[pos] = t[pos] * h.value(z[pos] / t[pos, None])
    return out


def sup_oracle(h: ConvexModel, P: np.ndarray, n_random: int = 256, seed: int = 0) -> np.ndarray:
    """sup_w ⟨Dh(w), z⟩ + t·(h(w) − ⟨Dh(w), w⟩) over a candidate set of w.

    Candidates: w = z/t (t > 0), the ray s·ẑ for s up to 1e12, the origin and fixed
    random points of a ball around the tail radius.
    """
    P = np.atleast_2d(np.asarray(P, float))
    rng = np.random.default_rng(seed)
    R = h.tail.R if h.tail else 10.0
    rand = rng.normal(size=(n_random, h.k))
    rand *= (rng.uniform(size=(n_random, 1)) ** (1 / h.k)) * 2 * R / np.linalg.norm(rand, axis=1, keepdims=True)
    rand = np.vstack([np.zeros((1, h.k)), rand])
    g_r, i_r = h.gradient(rand), h.intercept(rand)
    svals = np.concatenate([np.logspace(-2, 12, 57)])
    out = np.empty(len(P))
    for p_idx, p in enumerate(P):
        z, t = p[:-1], p[-1]
        best = float(np.max(g_r @ z + t * i_r))
        nz = np.linalg.norm(z)
        cands = []
        if t > 0:
            cands.append(z / t)
        if nz > 0:
            cands.extend(svals[:, None] * (z / nz)[None, :])
        if cands:
            W = np.asarray(cands)
            best = max(best, float(np.max(h.gradient(W) @ z + t * h.intercept(W))))
        out[p_idx] = best
    return out


def extend(h: ConvexModel, mode: Literal["closed_form", "sup_oracle"] = "closed_form") -> ExtendedG:
    lam = lambda_value(h)["lambda"]
    return ExtendedG(h, lam, mode)


def symmetric_extension(h: ConvexModel) -> Callable[[Any], np.ndarray]:
    """|t|·h(z/t), with h*(z) on t = 0; even by construction."""

    def G(p: Any) -> np.ndarray:
        P = np.atleast_2d(np.asarray(p, float))
        z, t = P[:, :-1], P[:, -1]
        out = np.empty(len(P))
        nzero = t != 0
        if np.any(nzero):
            out[nzero] = np.abs(t[nzero]) * h.value(z[nzero] / t[nzero, None])
        for i in np.flatnonzero(~nzero):
            out[i] = recession(h, z[i])["value"]
        return out

    return G


# ---------------------------------------------------------------------------
# property checks
# ---------------------------------------------------------------------------


def _ball(rng: np.random.Generator, n: int, k: int, R: float) -> np.ndarray:
    v = rng.normal(size=(n, k))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * R * rng.uniform(size=(n, 1)) ** (1 / k)


def check_properties(h: ConvexModel, samples: int = 2000, seed: int = 0, radius: float | None = None) -> dict[str, Any]:
    """(P): convexity, linear growth, intercept bounded below; (PE): additionally the
    pairwise inequality ⟨Dh(z₂), z₂ − z₁⟩ ≤ h(z₁) + h(z₂)."""
    rng = np.random.default_rng(seed)
    R = radius or max(3 * h.tail.R if h.tail else 0.0, 10.0)
    p, q = _ball(rng, samples, h.k, R), _ball(rng, samples, h.k, R)
    viol = h.value((p + q) / 2) - (h.value(p) + h.value(q)) / 2
    convex = bool(viol.max() <= 1e-9 * (1 + np.abs(h.value(p)).max()))
    radii = [1e2, 1e4, 1e6]
    dirs = rng.normal(size=(64, h.k))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    growth = [float(np.max(np.abs(h.value(r * dirs)) / (1 + r))) for r in radii]
    linear = bool(growth[-1] <= 2 * growth[0] + 1e-9)
    inter = [float(np.min(h.intercept(r * dirs))) for r in radii]
    bounded = bool(inter[-1] >= inter[0] - 1 - abs(inter[0]))
    P_ok = convex and linear and bounded
    # antipodal pairs z₁ = −z₂ are the sharpest test of the pairwise inequality
    p = np.vstack([p, -q])
    q = np.vstack([q, q])
    lhs = np.sum(h.gradient(q) * (q - p), axis=1)
    magg_viol = lhs - (h.value(p) + h.value(q))
    magg = bool(magg_viol.max() <= 1e-9)
    res: dict[str, Any] = {
        "P": P_ok,
        "PE": P_ok and magg,
        "convex": convex,
        "linear_growth": linear,
        "intercept_bounded": bounded,
        "magg": magg,
        "growth_ratios": growth,
        "intercept_inf": inter,
    }
    if not convex:
        i = int(np.argmax(viol))
        res["convexity_counterexample"] = {"p": p[i].tolist(), "q": q[i].tolist(), "gap": float(viol[i])}
    if not magg:
        i = int(np.argmax(magg_viol))
        res["magg_counterexample"] = {"z1": p[i].tolist(), "z2": q[i].tolist(), "gap": float(magg_viol[i])}
    return res


def midpoint_convexity(G: Callable[[Any], np.ndarray], P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """G((p+q)/2) − (G(p)+G(q))/2 (≤ 0 for convex G)."""
    return G((P + Q) / 2) - (G(P) + G(Q)) / 2


# ---------------------------------------------------------------------------
# the geometric integrand
# ---------------------------------------------------------------------------


def psi(gcal: Callable[[Any], np.ndarray], tau: MultiVector) -> float:
    """Ψ(τ) = 𝒢(φ(τ))."""
    return float(gcal(np.asarray(phi_coords(tau), float)[None])[0])


def f_from_psi(gcal: Callable[[Any], np.ndarray], X: Any) -> float:
    """Ψ(W(X)) with the unnormalized W(X) = M¹∧M²; equals f(X) by 1-homogeneity."""
    return psi(gcal, graph_frame(X).W)


def f_from_psi_many(gcal: Callable[[Any], np.ndarray], Xs: np.ndarray) -> np.ndarray:
    """Vectorized Ψ(W(X)) using φ(W(X)) = (X column-major, det X, 1)."""
    Xs = np.asarray(Xs, float).reshape(-1, 2, 2)
    d = Xs[:, 0, 0] * Xs[:, 1, 1] - Xs[:, 0, 1] * Xs[:, 1, 0]
    P = np.column_stack([Xs[:, 0, 0], Xs[:, 1, 0], Xs[:, 0, 1], Xs[:, 1, 1], d, np.ones(len(d))])
    return gcal(P)


# ---------------------------------------------------------------------------
# ellipticity
# ---------------------------------------------------------------------------


def _plucker(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """φ(u∧v) for u, v ∈ R⁴ (slot order of ``phi_coords``)."""
    m = lambda a, b: u[a] * v[b] - u[b] * v[a]
    return np.array([-m(1, 2), -m(1, 3), m(0, 2), m(0, 3), m(2, 3), m(0, 1)])


def _antisym(p: np.ndarray) -> np.ndarray:
    """Antisymmetric 4×4 matrix A with A = Σ a_IJ (e_I e_Jᵀ − e_J e_Iᵀ) from φ-coordinates."""
    c = {(1, 2): -p[0], (1, 3): -p[1], (0, 2): p[2], (0, 3): p[3], (2, 3): p[4], (0, 1): p[5]}
    A = np.zeros((4, 4))
    for (i, j), v in c.items():
        A[i, j], A[j, i] = v, -v
    return A


def split_simple(p: np.ndarray) -> list[np.ndarray]:
    """Write a 2-vector as a sum of at most two simple 2-vectors (normal form of A = −A ᵀ)."""
    A = _antisym(p)
    # A is normal; real Schur form gives A = Q diag(a J₂, b J₂) Qᵀ
    from scipy.linalg import schur

    T, Q = schur(A, output="real")
    out = []
    for s in (0, 2):
        a = T[s, s + 1]
        if abs(a) > 1e-300:
            out.append(a * _plucker(Q[:, s], Q[:, s + 1]))
    return out


def random_rotation(rng: np.random.Generator, n: int = 4) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(n, n)))
    return Q * np.sign(np.diag(R))


def graph_competitor(rng: np.random.Generator, grid: int = 4, amp: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Atoms (weights, unit φ-vectors) of the graph of a random P1 map vanishing on ∂[0,1]²;
    their weighted sum equals φ(e₁∧e₂) exactly (null Lagrangian)."""
    n = grid + 1
    U = np.zeros((n, n, 2))
    U[1:-1, 1:-1] = rng.normal(scale=amp, size=(n - 2, n - 2, 2))
    hcell = 1.0 / grid
    ws, taus = [], []
    for i in range(grid):
        for j in range(grid):
            for tri in ((0, 0), (1, 1)):
                if tri == (0, 0):
                    p0, p1, p2 = (i, j), (i + 1, j), (i, j + 1)
                else:
                    p0, p1, p2 = (i + 1, j + 1), (i, j + 1), (i + 1, j)
                e1 = (np.array(p1) - np.array(p0)) * hcell
                e2 = (np.array(p2) - np.array(p0)) * hcell
                E = np.column_stack([e1, e2])
                dU = np.column_stack([U[p1] - U[p0], U[p2] - U[p0]])
                X = dU @ np.linalg.inv(E)
                area_cell = abs(np.linalg.det(E)) / 2
                pvec = _plucker(np.array([1.0, 0.0, X[0, 0], X[1, 0]]), np.array([0.0, 1.0, X[0, 1], X[1, 1]]))
                nrm = np.linalg.norm(pvec)
                ws.append(area_cell * nrm)
                taus.append(pvec / nrm)
    return np.array(ws), np.array(taus)


def rotate_phi(Rot: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """Action of a rotation of R⁴ on φ-coordinates of 2-vectors (via antisymmetric matrices)."""
    out = []
    for p in np.atleast_2d(taus):
        A = Rot @ _antisym(p) @ Rot.T
        out.append(np.array([-A[1, 2], -A[1, 3], A[0, 2], A[0, 3], A[2, 3], A[0, 1]]))
    return np.array(out)


def general_competitor(rng: np.random.Generator, k: int = 4) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """k random unit simple atoms plus ≤ 2 simple atoms closing the sum to m_S·σ."""
    sigma = _plucker(*random_rotation(rng)[:, :2].T)
    ws, taus = [], []
    for _ in range(k):
        Rq = random_rotation(rng)
        taus.append(_plucker(Rq[:, 0], Rq[:, 1]))
        ws.append(rng.uniform(0.1, 1.0))
    mS = rng.uniform(0.5, 3.0)
    rest = mS * sigma - np.sum(np.array(ws)[:, None] * np.array(taus), axis=0)
    for piece in split_simple(rest):
        nrm = np.linalg.norm(piece)
        if nrm > 0:
            ws.append(nrm)
            taus.append(piece / nrm)
    return np.array(ws), np.array(taus), mS, sigma


def ellipticity_test(
    gcal: Callable[[Any], np.ndarray], trials: int = 1000, seed: int = 0, margin: float = 0.0, kind: str = "mixed"
) -> dict[str, Any]:
    """Σ w_a Ψ(τ_a) − m_S Ψ(σ) ≥ margin·(Σ w_a − m_S) on random competitor measures.

    ``kind``: "graph" (rotated graphs of P1 maps with zero boundary), "general"
    (arbitrary simple atoms) or "mixed" (alternating).
    """
    rng = np.random.default_rng(seed)
    worst = math.inf
    worst_case: dict[str, Any] | None = None
    fails = 0
    closure = 0.0
    for trial in range(trials):
        use_graph = kind == "graph" or (kind == "mixed" and trial % 2 == 0)
        if use_graph:
            ws, taus = graph_competitor(rng, grid=int(rng.integers(2, 5)), amp=float(rng.uniform(0.1, 3.0)))
            Rot = random_rotation(rng) if trial % 4 == 0 else np.eye(4)
            taus = rotate_phi(Rot, taus)
            sigma = rotate_phi(Rot, np.array([[0, 0, 0, 0, 0, 1.0]]))[0]
            mS = 1.0
        else:
            ws, taus, mS, sigma = general_competitor(rng)
        closure = max(closure, float(np.linalg.norm(ws @ taus - mS * sigma)))
        lhs = float(ws @ gcal(taus))
        rhs = mS * float(gcal(sigma[None])[0])
        slack = lhs - rhs - margin * (float(ws.sum()) - mS)
        scale_ = 1e-9 * (1 + abs(lhs) + abs(rhs))
        if slack < -scale_:
            fails += 1
        if slack < worst:
            worst = slack
            worst_case = {"weights": ws.tolist(), "atoms": taus.tolist(), "m_S": mS, "sigma": sigma.tolist(), "slack": slack}
    return {
        "trials": trials,
        "margin": margin,
        "failures": fails,
        "passed": fails == 0,
        "min_slack": worst,
        "closure_error": closure,
        "worst_case": worst_case if fails else None,
    }


def ualm_margin(gcal: Callable[[Any], np.ndarray], eps: float, trials: int = 1000, seed: int = 0) -> dict[str, Any]:
    """Ellipticity with margin ε/2 plus midpoint-convexity sampling of 𝒢 − (ε/2)‖·‖.

    Convexity of the shifted function is sampled separately on the half-space t ≥ 0
    and on pairs of points with t < 0; only the former carries the graph competitors.
    """
    rng = np.random.default_rng(seed + 1)

    def g_eps(P):
        P = np.atleast_2d(P)
        return gcal(P) - eps / 2 * np.linalg.norm(P, axis=1)

    n = 4000
    A = rng.normal(size=(n, 6))
    B = rng.normal(size=(n, 6))
    A[:, 5], B[:, 5] = np.abs(A[:, 5]), np.abs(B[:, 5])
    upper = midpoint_convexity(g_eps, A, B)
    A[:, 5], B[:, 5] = -A[:, 5], -B[:, 5]
    lower = midpoint_convexity(g_eps, A * 10, B * 10)
    # segments along a ray {(s·ẑ, t)} with fixed t < 0, where 𝒢 is affine in s
    zhat = rng.normal(size=(n, 5))
    zhat /= np.linalg.norm(zhat, axis=1, keepdims=True)
    tt = -rng.uniform(0.1, 1.0, size=(n, 1))
    s1, s2 = rng.uniform(0, 5, size=(n, 1)), rng.uniform(0, 5, size=(n, 1))
    ray = midpoint_convexity(g_eps, np.hstack([s1 * zhat, tt]), np.hstack([s2 * zhat, tt]))
    iray = int(np.argmax(ray))
    ell = ellipticity_test(gcal, trials=trials, seed=seed, margin=eps / 2)
    graph_only = ellipticity_test(gcal, trials=trials, seed=seed + 7, margin=eps / 2, kind="graph")
    return {
        "epsilon": eps,
        "margin": eps / 2,
        "shifted_convex_upper_half": bool(upper.max() <= 1e-9),
        "shifted_max_midpoint_gap_upper": float(upper.max()),
        "shifted_convex_lower_half": bool(lower.max() <= 1e-9),
        "shifted_max_midpoint_gap_lower": float(lower.max()),
        "shifted_convex_on_negative_rays": bool(ray.max() <= 1e-12),
        "shifted_ray_midpoint_gap": float(ray.max()),
        "shifted_ray_counterexample": {
            "p": np.hstack([s1[iray] * zhat[iray], tt[iray]]).tolist(),
            "q": np.hstack([s2[iray] * zhat[iray], tt[iray]]).tolist(),
        },
        "ellipticity": ell,
        "ellipticity_graph_competitors": graph_only,
        "passed": ell["passed"] and graph_only["passed"],
    }
