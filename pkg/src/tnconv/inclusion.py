"""Inclusion sets K_f / C_f: pairwise obstruction matrices, wave-cone connections, shifts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, Literal, Sequence

import numpy as np

from . import exact_core as ec
from .exact_core import Matrix, MultiIndexPair, PreconditionError
from .tn_algebra import (
    TNConfig,
    TPrimeNConfig,
    assemble,
    defining_vector,
    lambda_dc_member,
    partial_points,
)

J_ROT: Matrix = [[Fraction(0), Fraction(-1)], [Fraction(1), Fraction(0)]]
FLOAT_MARGIN = -1e-9


@dataclass
class InclusionPoint:
    """Stacked (X, Y, Z) with multiplicity β, value c = f(X) and minor derivatives d_Z."""

    X: Matrix
    Y: Matrix
    Z: Matrix
    beta: Any = Fraction(1)
    c: Any = Fraction(0)
    dZ: dict[MultiIndexPair, Any] = field(default_factory=dict)

    def stacked(self) -> Matrix:
        return ec.vstack(self.X, self.Y, self.Z)


@dataclass
class IntegrandOracle:
    """f with optional closed-form gradient and minor derivatives.

    Without ``gradient`` a 5-point central difference with step 1e−5·(1+‖X‖) is used.
    """

    value: Callable[[Any], Any]
    gradient: Callable[[Any], Any] | None = None
    minor_derivatives: Callable[[Any], dict[MultiIndexPair, Any]] | None = None

    def grad(self, X: Any) -> Any:
        if self.gradient is not None:
            return self.gradient(X)
        return fd_gradient(self.value, X)


def fd_gradient(fun: Callable[[Any], float], X: Any) -> np.ndarray:
    """Five-point central differences, step 1e−5·(1+‖X‖)."""
    X = np.asarray(X, dtype=float)
    h = 1e-5 * (1.0 + float(np.linalg.norm(X)))
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        G[idx] = (-fun(X + 2 * E) + 8 * fun(X + E) - 8 * fun(X - E) + fun(X - 2 * E)) / (12 * h)
    return G


def _as_list(M: Any) -> Matrix:
    if isinstance(M, np.ndarray):
        return M.tolist()
    return [list(r) for r in M]


def kf_point(f: IntegrandOracle, X: Any) -> InclusionPoint:
    """(X, Df(X), XᵀDf(X) − f(X)·I) with β = 1 and c = f(X)."""
    Xl = _as_list(X)
    c = f.value(X)
    Y = _as_list(f.grad(X))
    m = ec.shape(Xl)[1]
    one = Fraction(1) if not isinstance(c, float) else 1.0
    Z = ec.sub(ec.matmul(ec.transpose(Xl), Y), ec.scale(c, ec.identity(m, one)))
    dZ = f.minor_derivatives(X) if f.minor_derivatives else {}
    return InclusionPoint(X=Xl, Y=Y, Z=Z, beta=one, c=c, dZ=dZ)


def _exact_points(points: Sequence[InclusionPoint]) -> bool:
    vals: list[Any] = []
    for p in points:
        vals += [v for M in (p.X, p.Y) for r in M for v in r] + [p.beta, p.c] + list(p.dZ.values())
    return not any(isinstance(v, float) for v in vals)


def q_entry(a: InclusionPoint, b: InclusionPoint, variant: Literal["straight", "curl"] = "curl") -> Any:
    """Pairwise obstruction value Q_ab (must be < 0 for every a ≠ b).

    curl:     c_a − c_b + d_a det(X_a − X_b) + (1/β_a)⟨X_a − X_b, Y_a J⟩     (2×2 only)
    straight: c_a − c_b + (1/β_a)⟨Y_a, X_b − X_a⟩
              − Σ_Z d^a_Z (⟨cof(X_a^Z)ᵀ, X_b^Z − X_a^Z⟩ − det X_b^Z + det X_a^Z)
    """
    diff = ec.sub(a.X, b.X)
    if variant == "curl":
        if ec.shape(a.X) != (2, 2):
            raise ec.ShapeError("curl variant is defined for 2×2 blocks")
        d = a.dZ.get(MultiIndexPair((0, 1), (0, 1)), 0)
        return a.c - b.c + d * ec.det(diff) + ec.frob(diff, ec.matmul(a.Y, J_ROT)) / a.beta
    val = a.c - b.c + ec.frob(a.Y, ec.scale(-1, diff)) / a.beta
    for Z, dz in a.dZ.items():
        if Z.order < 2:
            continue
        Xa, Xb = ec.minor(a.X, Z), ec.minor(b.X, Z)
        val = val - dz * (ec.frob(ec.transpose(ec.adjugate(Xa)), ec.sub(Xb, Xa)) - ec.det(Xb) + ec.det(Xa))
    return val


def straight_y(p: InclusionPoint, variant: str) -> Matrix:
    """βDf(X): stored Y in the straight variant, −Y J in the curl variant (Y = βDf J)."""
    if variant == "curl":
        return ec.scale(-1, ec.matmul(p.Y, J_ROT))
    return p.Y


def nu_vector(points: Sequence[InclusionPoint], witness: TNConfig, variant: str = "curl") -> list[Any]:
    """ν_i = β_i c_i − β_i Σ_j t^i_j c_j − k_i ⟨Y_i, C_i⟩ for the X-block witness."""
    dv = defining_vector(witness.k)
    out = []
    for i, p in enumerate(points):
        tc = sum((t * q.c for t, q in zip(dv.t[i], points)), start=0 * p.c)
        out.append(p.beta * p.c - p.beta * tc - witness.k[i] * ec.frob(straight_y(p, variant), witness.C[i]))
    return out


def qij_report(
    points: Sequence[InclusionPoint],
    variant: Literal["straight", "curl"] = "curl",
    witness: TNConfig | None = None,
    nu: bool = False,
) -> dict[str, Any]:
    """Q matrix (diagonal 0), strict-negativity verdicts and optionally ν.

    Exact on rational input; float input uses the strictness margin −1e−9.
    """
    if len(points) < 2:
        raise PreconditionError("need at least two points")
    if nu and witness is None:
        raise PreconditionError("ν requires a T_N witness (defining vector) for the X-block")
    exact = _exact_points(points)
    N = len(points)
    Q: list[list[Any]] = [[0 * points[0].c for _ in range(N)] for _ in range(N)]
    verdicts = []
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            Q[i][j] = q_entry(points[i], points[j], variant)
            ok = Q[i][j] < 0 if exact else Q[i][j] < FLOAT_MARGIN
            verdicts.append({"i": i + 1, "j": j + 1, "negative": bool(ok)})
    report: dict[str, Any] = {
        "Q": ec.matrix_to_json(Q) if exact else [[float(v) for v in r] for r in Q],
        "verdicts": verdicts,
        "all_negative": all(v["negative"] for v in verdicts),
        "max_offdiag": _fmt(max(Q[i][j] for i in range(N) for j in range(N) if i != j)),
        "exact": exact,
        "nu": [],
        "mu": [],
    }
    if nu and witness is not None:
        report["nu"] = [_fmt(v) for v in nu_vector(points, witness, variant)]
    report["_Q"] = Q
    return report


def _fmt(v: Any) -> Any:
    return ec.fraction_to_str(v) if isinstance(v, (Fraction, int)) else float(v)


# ---------------------------------------------------------------------------
# the trace/eigen identity for T'_N inside C_f
# ---------------------------------------------------------------------------


def tec_check(config: TPrimeNConfig, beta: Sequence[Any], c: Sequence[Any]) -> dict[str, Any]:
    """Compare Σ_j k_j(k_j−1) t^i_j C_jᵀ D_j n_i with μ_i n_i.

    μ_i = k_i⟨C_i, Y_i⟩ − β_i c_i + Σ_j β_j t^i_j c_j.  The hypotheses (P = 0 and
    Z_i = X_iᵀY_i − β_i c_i·I) are checked first; if one fails it is reported and no
    defect is claimed.  The report also contains ``identity_residual``, the size of
    LHS_i − μ_i n_i + k_i E_i n_i, which vanishes whenever only the Z-hypothesis and
    the (C, D) cone conditions hold (so the defect equals k_i‖E_i n_i‖).
    """
    base = config.base
    N = base.N
    m = base.shape[1]
    Xs = assemble(base)
    Ys = assemble(TNConfig(config.Q, config.D, config.k))
    Zs = assemble(TNConfig(config.R, config.E, config.k))
    exact = all(not isinstance(v, float) for M in Xs + Ys + Zs for r in M for v in r)
    tol = 0 if exact else 1e-10
    failures = []
    if any(v != 0 for r in base.P for v in r):
        failures.append("P != 0")
    for i in range(N):
        expect = ec.sub(ec.matmul(ec.transpose(Xs[i]), Ys[i]), ec.scale(beta[i] * c[i], ec.identity(m, Fraction(1))))
        if _maxabs(ec.sub(Zs[i], expect)) > tol:
            failures.append(f"Z_{i + 1} != X_{i + 1}^T Y_{i + 1} - beta c Id")
            break
    if len(config.n_dir) != N:
        failures.append("directions n_i missing")
    if failures:
        return {"preconditions": False, "failures": failures, "mu": [], "defect": None}
    dv = defining_vector(base.k)
    mus, defects, ident = [], [], []
    for i in range(N):
        n_i = list(config.n_dir[i])
        lhs = [0 * dv.mu] * m
        for j in range(N):
            coef = base.k[j] * (base.k[j] - 1) * dv.t[i][j]
            v = ec.matvec(ec.matmul(ec.transpose(base.C[j]), config.D[j]), n_i)
            lhs = [a + coef * b for a, b in zip(lhs, v)]
        mu_i = base.k[i] * ec.frob(base.C[i], Ys[i]) - beta[i] * c[i]
        mu_i = mu_i + sum((beta[j] * dv.t[i][j] * c[j] for j in range(N)), start=0 * dv.mu)
        gap = [a - mu_i * b for a, b in zip(lhs, n_i)]
        en = ec.matvec(config.E[i], n_i)
        mus.append(mu_i)
        defects.append(max(abs(g) for g in gap))
        ident.append(max(abs(g + base.k[i] * e) for g, e in zip(gap, en)))
    return {
        "preconditions": True,
        "failures": [],
        "mu": [_fmt(v) for v in mus],
        "defect": _fmt(max(defects)),
        "defects": [_fmt(v) for v in defects],
        "identity_residual": _fmt(max(ident)),
        "exact": exact,
        "_mu": mus,
    }


def _maxabs(M: Sequence[Sequence[Any]]) -> Any:
    return max(abs(v) for r in M for v in r)


def recompute_z_block(config: TPrimeNConfig, beta: Sequence[Any], c: Sequence[Any]) -> TPrimeNConfig:
    """Replace Z_i by X_iᵀY_i − β_i c_i·I and re-solve for (R, E_i) with ΣE_i = 0.

    Uses P_i = Σ_j t^i_j Z_j for the partial points, so E_i = P_{i+1} − P_i.
    """
    base = config.base
    m = base.shape[1]
    Xs = assemble(base)
    Ys = assemble(TNConfig(config.Q, config.D, config.k))
    Zs = [
        ec.sub(ec.matmul(ec.transpose(X), Y), ec.scale(b * cc, ec.identity(m, Fraction(1))))
        for X, Y, b, cc in zip(Xs, Ys, beta, c)
    ]
    dv = defining_vector(base.k)
    Ps = [ec.mat_sum([ec.scale(t, Z) for t, Z in zip(dv.t[i], Zs)]) for i in range(base.N)]
    E = [ec.sub(Ps[(i + 1) % base.N], Ps[i]) for i in range(base.N)]
    return replace(config, R=Ps[0], E=E)


# ---------------------------------------------------------------------------
# wave-cone connections and the nonnegativity shift
# ---------------------------------------------------------------------------


def rank_connection_test(a: InclusionPoint, b: InclusionPoint, theorem_mode: bool = False, tol: float = 0.0) -> dict[str, Any]:
    """Is A − B in the wave cone?  In theorem mode (c, c' ≥ 0) a connection is a violation."""
    dX, dY, dZ = ec.sub(b.X, a.X), ec.sub(b.Y, a.Y), ec.sub(b.Z, a.Z)
    allzero = all(abs(v) <= tol for M in (dX, dY, dZ) for r in M for v in r)
    if allzero:
        return {"verdict": "degenerate", "connected": None, "direction": None}
    hit = lambda_dc_member(dX, dY, dZ, tol)
    out: dict[str, Any] = {
        "verdict": "connected" if hit else "not_connected",
        "connected": hit is not None,
        "direction": None if hit is None else [_fmt(v) for v in hit[0]],
    }
    if theorem_mode:
        if a.c < 0 or b.c < 0:
            out["theorem_applicable"] = False
        else:
            out["theorem_applicable"] = True
            out["violation"] = hit is not None
    return out


def shift_nonnegative(points: Sequence[InclusionPoint]) -> tuple[list[InclusionPoint], Any, int]:
    """c'_i = c_i − min c, Z'_i = Z_i + β_i(min c)·I; returns (points', min c, argmin index 0-based)."""
    cmin = min(p.c for p in points)
    arg = next(i for i, p in enumerate(points) if p.c == cmin)
    out = []
    for p in points:
        m = ec.shape(p.Z)[0]
        one = Fraction(1) if not isinstance(cmin, float) else 1.0
        out.append(replace(p, c=p.c - cmin, Z=ec.add(p.Z, ec.scale(p.beta * cmin, ec.identity(m, one)))))
    return out, cmin, arg


def connected_pair_quadratic(
    X: Matrix, xi: Sequence[Any], beta: Any, beta_p: Any
) -> tuple[InclusionPoint, InclusionPoint, Any]:
    """Two C_f points of f = ½‖X‖² + κ whose difference lies in the wave cone.

    X' = X + u⊗ξ with u = −(β'−β)Xξ/β' (so (Y'−Y)ξ = 0) and κ solving the scalar
    compatibility ⟨C, Y⟩ = β'c' − βc (so (Z'−Z)ξ = 0).  Requires β ≠ β'; the values
    c, c' then have opposite signs or vanish, in line with the sign obstruction.
    Returns the two points and κ.
    """
    xi = list(xi)
    nn = sum((v * v for v in xi), start=0 * xi[0])
    Xxi = ec.matvec(X, xi)
    u = [-(beta_p - beta) * v / beta_p for v in Xxi]
    C = ec.scale(1 / nn, ec.outer(u, xi))
    Xp = ec.add(X, C)
    Y = ec.scale(beta, X)
    Yp = ec.scale(beta_p, Xp)
    q = ec.frob(X, X) / 2
    qp = ec.frob(Xp, Xp) / 2
    # <C, Y> = beta' (qp + kappa) - beta (q + kappa)
    kappa = (ec.frob(C, Y) - beta_p * qp + beta * q) / (beta_p - beta)
    c, cp = q + kappa, qp + kappa
    m = ec.shape(X)[1]
    I = ec.identity(m, Fraction(1))
    Z = ec.sub(ec.matmul(ec.transpose(X), Y), ec.scale(beta * c, I))
    Zp = ec.sub(ec.matmul(ec.transpose(Xp), Yp), ec.scale(beta_p * cp, I))
    return InclusionPoint(X, Y, Z, beta, c), InclusionPoint(Xp, Yp, Zp, beta_p, cp), kappa


def partial_sums_check(config: TNConfig) -> list[Matrix]:
    """Convenience re-export: partial points P_i of an X-block witness."""
    return partial_points(config)
