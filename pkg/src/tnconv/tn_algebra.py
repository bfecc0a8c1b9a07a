"""T_N and T'_N configurations: defining vectors, identities and witness detection."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import exact_core as ec
from .exact_core import Matrix, PreconditionError, ShapeError

log = logging.getLogger(__name__)

FLOAT_TOL = 1e-9


class DomainError(ValueError):
    """Raised when an input lies outside the admissible domain (e.g. k_i ≤ 1)."""


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass
class TNConfig:
    """Witness (P, C_i, k_i) with X_i = P + C₁ + … + C_{i−1} + k_i C_i."""

    P: Matrix
    C: list[Matrix]
    k: list[Any]

    @property
    def N(self) -> int:
        return len(self.C)

    @property
    def shape(self) -> tuple[int, int]:
        return ec.shape(self.P)

    def to_json(self) -> dict[str, Any]:
        n, m = self.shape
        return {
            "N": self.N,
            "n": n,
            "m": m,
            "P": ec.matrix_to_json(self.P),
            "C": [ec.matrix_to_json(c) for c in self.C],
            "k": [_scalar_json(v) for v in self.k],
        }


@dataclass
class TPrimeNConfig:
    """Stacked witness: X-part ``base`` plus (Q, D_i) for Y, (R, E_i) for Z and directions n_i."""

    base: TNConfig
    Q: Matrix
    R: Matrix
    D: list[Matrix]
    E: list[Matrix]
    n_dir: list[list[Any]] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.base.N

    @property
    def k(self) -> list[Any]:
        return self.base.k

    def to_json(self) -> dict[str, Any]:
        out = self.base.to_json()
        out.update(
            {
                "Q": ec.matrix_to_json(self.Q),
                "R": ec.matrix_to_json(self.R),
                "D": [ec.matrix_to_json(d) for d in self.D],
                "E": [ec.matrix_to_json(e) for e in self.E],
                "n_dir": [[_scalar_json(v) for v in n] for n in self.n_dir],
            }
        )
        return out


def _scalar_json(v: Any) -> Any:
    return ec.fraction_to_str(v) if isinstance(v, (Fraction, int)) else float(v)


def _scalar_from_json(v: Any) -> Any:
    return v if isinstance(v, float) else ec.to_fraction(v)


def config_from_json(data: dict[str, Any] | str) -> TNConfig | TPrimeNConfig:
    """Parse the config schema {N, n, m, P, C[], k[], (Q, R, D[], E[], n_dir[])}."""
    if isinstance(data, str):
        data = json.loads(data)
    try:
        N, n, m = int(data["N"]), int(data["n"]), int(data["m"])
        base = TNConfig(
            P=ec.matrix_from_json(data["P"]),
            C=[ec.matrix_from_json(c) for c in data["C"]],
            k=[_scalar_from_json(v) for v in data["k"]],
        )
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ShapeError(f"malformed configuration: {exc}") from exc
    if base.N != N or len(base.k) != N or ec.shape(base.P) != (n, m):
        raise ShapeError("configuration sizes disagree with N, n, m")
    if any(ec.shape(c) != (n, m) for c in base.C):
        raise ShapeError("C_i must all be n×m")
    if "Q" not in data:
        return base
    cfg = TPrimeNConfig(
        base=base,
        Q=ec.matrix_from_json(data["Q"]),
        R=ec.matrix_from_json(data["R"]),
        D=[ec.matrix_from_json(d) for d in data["D"]],
        E=[ec.matrix_from_json(e) for e in data["E"]],
        n_dir=[[_scalar_from_json(v) for v in nd] for nd in data.get("n_dir", [])],
    )
    if len(cfg.D) != N or len(cfg.E) != N:
        raise ShapeError("D and E need N entries")
    return cfg


# ---------------------------------------------------------------------------
# defining vectors
# ---------------------------------------------------------------------------


@dataclass
class DefiningVector:
    lam: list[Any]
    mu: Any
    t: list[list[Any]]
    xi: list[Any]


def _is_exact(values: Sequence[Any]) -> bool:
    return not any(isinstance(v, float) for v in values)


def t_vectors(lam: Sequence[Any], mu: Any) -> tuple[list[list[Any]], list[Any]]:
    """t^i = (μλ₁,…,μλ_{i−1}, λ_i,…,λ_N)/ξ_i with ξ_i = 1 + (μ−1)Σ_{j<i}λ_j."""
    N = len(lam)
    ts, xis = [], []
    for i in range(N):
        xi = 1 + (mu - 1) * sum(lam[:i], start=0 * mu)
        ts.append([(mu * lam[j] if j < i else lam[j]) / xi for j in range(N)])
        xis.append(xi)
    return ts, xis


def defining_vector(k: Sequence[Any]) -> DefiningVector:
    """Invert k ↦ (λ, μ): ξ₁ = 1, ξ_{i+1} = ξ_i·k_i/(k_i−1), μ = ξ_{N+1}, λ_i = (ξ_{i+1} − ξ_i)/(μ − 1).

    This is the unique solution of k_i(μ−1)λ_i = 1 + (μ−1)Σ_{j≤i}λ_j with Σλ = 1.
    """
    if len(k) < 2:
        raise DomainError("need N ≥ 2")
    if any(not (v > 1) for v in k):
        raise DomainError("every k_i must exceed 1")
    exact = _is_exact(k)
    one = Fraction(1) if exact else 1.0
    xs = [one]
    for ki in k:
        xs.append(xs[-1] * ki / (ki - 1))
    mu = xs[-1]
    lam = [(xs[i + 1] - xs[i]) / (mu - 1) for i in range(len(k))]
    ts, xis = t_vectors(lam, mu)
    return DefiningVector(lam=lam, mu=mu, t=ts, xi=xis)


def k_from_defining(lam: Sequence[Any], mu: Any) -> list[Any]:
    """k_i = (μΣ_{j≤i}λ_j + Σ_{j>i}λ_j) / ((μ−1)λ_i)."""
    N = len(lam)
    out = []
    for i in range(N):
        num = mu * sum(lam[: i + 1], start=0 * mu) + sum(lam[i + 1 :], start=0 * mu)
        out.append(num / ((mu - 1) * lam[i]))
    return out


# ---------------------------------------------------------------------------
# assembly and checks
# ---------------------------------------------------------------------------


def partial_points(config: TNConfig) -> list[Matrix]:
    """P_i = P + C₁ + … + C_{i−1} for i = 1..N."""
    out = [ec.add(config.P, ec.zeros(*config.shape, zero=0 * config.P[0][0]))]
    for c in config.C[:-1]:
        out.append(ec.add(out[-1], c))
    return out


def assemble(config: TNConfig) -> list[Matrix]:
    """X_i = P + Σ_{j<i} C_j + k_i C_i."""
    return [ec.add(Pi, ec.scale(ki, Ci)) for Pi, Ci, ki in zip(partial_points(config), config.C, config.k)]


def assemble_prime(config: TPrimeNConfig) -> list[Matrix]:
    """Stacked A_i = (X_i; Y_i; Z_i) for a T'_N witness."""
    Xs = assemble(config.base)
    Ys = assemble(TNConfig(config.Q, config.D, config.k))
    Zs = assemble(TNConfig(config.R, config.E, config.k))
    return [ec.vstack(x, y, z) for x, y, z in zip(Xs, Ys, Zs)]


def _max_abs(M: Sequence[Sequence[Any]]) -> Any:
    return max((abs(v) for r in M for v in r), default=0)


def _rank_le_one(C: Matrix, tol: float) -> bool:
    if tol == 0:
        return ec.rank(C) <= 1
    s = np.linalg.svd(np.asarray(C, dtype=float), compute_uv=False)
    return len(s) < 2 or s[1] <= tol * (1 + s[0])


def _tol_for(mats: Sequence[Matrix], tol: float | None) -> float:
    if tol is not None:
        return tol
    exact = all(_is_exact([v for r in M for v in r]) for M in mats)
    return 0.0 if exact else FLOAT_TOL


def check_tn(X: Sequence[Matrix], witness: TNConfig, tol: float | None = None) -> dict[str, Any]:
    """Verify that ``witness`` realizes X₁..X_N as a T_N configuration.

    Exact on rational input (``tol`` = 0); otherwise residuals are compared with ``tol``.
    """
    N = witness.N
    if len(X) != N or len(witness.k) != N:
        raise ShapeError("number of matrices and witness size differ")
    if any(ec.shape(x) != witness.shape for x in X) or any(ec.shape(c) != witness.shape for c in witness.C):
        raise ShapeError("matrix shapes disagree")
    tol = _tol_for(list(X) + [witness.P] + list(witness.C), tol)
    failures: list[str] = []
    for i in range(N):
        for j in range(i + 1, N):
            if _max_abs(ec.sub(X[i], X[j])) <= tol:
                failures.append(f"X_{i + 1} and X_{j + 1} not distinct")
    for i, ki in enumerate(witness.k):
        if not ki > 1:
            failures.append(f"k_{i + 1} not > 1")
    csum = ec.mat_sum(witness.C)
    if _max_abs(csum) > tol:
        failures.append("sum of C_i is not zero")
    ranks_ok = [_rank_le_one(c, tol) for c in witness.C]
    for i, ok in enumerate(ranks_ok):
        if not ok:
            failures.append(f"rank(C_{i + 1}) > 1")
    resid = max(_max_abs(ec.sub(a, b)) for a, b in zip(assemble(witness), X))
    if resid > tol:
        failures.append("assembly residual too large")
    nondeg = all(_max_abs(c) > tol for c in witness.C) and all(ranks_ok)
    return {
        "passed": not failures,
        "failures": failures,
        "residual": float(resid),
        "nondegenerate": bool(nondeg),
        "exact": tol == 0,
    }


def lambda_dc_member(X: Matrix, Y: Matrix, Z: Matrix, tol: float = 0.0) -> tuple[list[Any], list[Any]] | None:
    """Return (ξ, u) with X = u⊗ξ, Yξ = 0, Zξ = 0 and ‖ξ‖ = 1, or None.

    With ``tol`` = 0 the test is exact; ξ stays rational whenever the unit
    direction has a rational representative and is a float vector otherwise.
    """
    m = ec.shape(X)[1]
    yz = ec.vstack(Y, Z)
    if _max_abs(X) <= tol and _max_abs(yz) <= tol:
        zero = 0 * X[0][0] if tol == 0 else 0.0
        return [zero + (1 if a == 0 else 0) for a in range(m)], [zero] * ec.shape(X)[0]
    if tol == 0:
        if ec.rank(X) > 1:
            return None
        if ec.rank(X) == 1:
            direction = list(next(r for r in X if any(v != 0 for v in r)))
            if any(v != 0 for v in ec.matvec(yz, direction)):
                return None
        else:
            ker = ec.kernel(yz)
            if not ker:
                return None
            direction = ker[0]
    else:
        Xf = np.asarray(X, dtype=float)
        yzf = np.asarray(yz, dtype=float)
        _, s, vt = np.linalg.svd(Xf)
        if len(s) > 1 and s[1] > tol * (1 + s[0]):
            return None
        if s[0] > tol:
            d = vt[0]
        else:
            _, sv, wt = np.linalg.svd(yzf)
            if len(sv) == m and sv[-1] > tol * (1 + sv[0]):
                return None
            d = wt[-1]
        if np.max(np.abs(yzf @ d)) > tol * (1 + np.max(np.abs(yzf))):
            return None
        direction = list(d)
    norm2 = sum((v * v for v in direction), start=0 * direction[0])
    nrm = _exact_sqrt(norm2) if _is_exact(direction) else None
    if nrm is None:
        nrmf = float(np.sqrt(float(norm2)))
        xi = [float(v) / nrmf for v in direction]
        u = [float(v) for v in np.asarray(X, dtype=float) @ np.asarray(xi)]
    else:
        xi = [v / nrm for v in direction]
        u = ec.matvec(X, xi)
    return xi, u


def _exact_sqrt(q: Fraction) -> Fraction | None:
    from math import isqrt

    q = Fraction(q)
    a, b = isqrt(q.numerator), isqrt(q.denominator)
    return Fraction(a, b) if a * a == q.numerator and b * b == q.denominator else None


def check_tn_prime(A: Sequence[Matrix], witness: TPrimeNConfig, tol: float | None = None) -> dict[str, Any]:
    """Verify a stacked T'_N witness and the derived properties of its blocks."""
    N = witness.N
    n, m = witness.base.shape
    if len(A) != N or any(ec.shape(a) != (2 * n + m, m) for a in A):
        raise ShapeError("A_i must be N stacked (2n+m)×m matrices")
    mats = list(A) + [witness.Q, witness.R] + witness.D + witness.E + witness.base.C
    tol = _tol_for(mats, tol)
    failures: list[str] = []
    for i in range(N):
        for j in range(i + 1, N):
            if _max_abs(ec.sub(A[i], A[j])) <= tol:
                failures.append(f"A_{i + 1} and A_{j + 1} not distinct")
    for i, ki in enumerate(witness.k):
        if not ki > 1:
            failures.append(f"k_{i + 1} not > 1")
    resid = max(_max_abs(ec.sub(a, b)) for a, b in zip(assemble_prime(witness), A))
    if resid > tol:
        failures.append("assembly residual too large")
    for name, blocks in (("C", witness.base.C), ("D", witness.D), ("E", witness.E)):
        if _max_abs(ec.mat_sum(blocks)) > tol:
            failures.append(f"sum of {name}_i is not zero")
    directions: list[Any] = []
    for i in range(N):
        C, D, E = witness.base.C[i], witness.D[i], witness.E[i]
        nd = witness.n_dir[i] if i < len(witness.n_dir) else None
        if nd is not None:
            ok = _in_cone_along(C, D, E, nd, tol)
        else:
            ok = lambda_dc_member(C, D, E, tol) is not None
        if not ok:
            failures.append(f"wave-cone violation at index {i + 1}")
        directions.append(nd)
        if abs(ec.frob(C, D)) > tol:
            failures.append(f"<C_{i + 1}, D_{i + 1}> != 0")
    Xs = [ec.block(a, 0, n) for a in A]
    x_distinct = all(_max_abs(ec.sub(Xs[i], Xs[j])) > tol for i in range(N) for j in range(i + 1, N))
    x_report = check_tn(Xs, witness.base, tol) if x_distinct else None
    if x_report is not None and not x_report["passed"]:
        failures.extend(f"X-part: {f}" for f in x_report["failures"])
    return {
        "passed": not failures,
        "failures": failures,
        "residual": float(resid),
        "x_part_tn": None if x_report is None else x_report["passed"],
        "nondegenerate": None if x_report is None else x_report["nondegenerate"],
        "exact": tol == 0,
    }


def _in_cone_along(C: Matrix, D: Matrix, E: Matrix, nvec: Sequence[Any], tol: float) -> bool:
    """C = u⊗n, D n = 0, E n = 0 for the given direction n."""
    if all(v == 0 for v in nvec):
        return False
    nn = sum((v * v for v in nvec), start=0 * nvec[0])
    u = [x / nn for x in ec.matvec(C, nvec)]
    if _max_abs(ec.sub(C, ec.outer(u, nvec))) > tol * (1 + _max_abs(C)):
        return False
    return max(abs(v) for v in ec.matvec(D, nvec) + ec.matvec(E, nvec)) <= tol * (1 + _max_abs(D) + _max_abs(E))


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------


def _weighted(ts: Sequence[Any], mats: Sequence[Matrix]) -> Matrix:
    return ec.mat_sum([ec.scale(t, M) for t, M in zip(ts, mats)])


def identity_suite(config: TNConfig | TPrimeNConfig, tol: float | None = None) -> dict[str, Any]:
    """Check the barycentric identities satisfied by a valid configuration.

    * Σ_j t^i_j X_j = P + C₁ + … + C_{i−1} (and likewise for the Y and Z blocks);
    * Σ_j t^i_j S(X_j) = S(Σ_j t^i_j X_j) = S(P_i) for every minor S of every order;
    * Σ_j λ_j (X_j − P)ᵀ(Y_j − Q) = Σ_j k_j(k_j − 1) λ_j C_jᵀ D_j (T'_N only).

    Returns the maximal residual per family and a pass flag.
    """
    base = config.base if isinstance(config, TPrimeNConfig) else config
    dv = defining_vector(base.k)
    exact = _is_exact(list(base.k)) and _is_exact([v for M in [base.P] + base.C for r in M for v in r])
    tol = (0.0 if exact else 1e-11) if tol is None else tol
    Xs = assemble(base)
    Ps = partial_points(base)
    n, m = base.shape
    res: dict[str, Any] = {}

    def lin(blocks: list[Matrix], points: list[Matrix]) -> Any:
        return max(_max_abs(ec.sub(_weighted(dv.t[i], blocks), points[i])) for i in range(base.N))

    res["partial_sums_X"] = lin(Xs, Ps)
    worst = 0 * dv.mu
    for r in range(1, min(n, m) + 1):
        for Z in ec.all_index_pairs(n, m, r):
            for i in range(base.N):
                lhs = sum((t * ec.minor_det(X, Z) for t, X in zip(dv.t[i], Xs)), start=0 * dv.mu)
                mid = ec.minor_det(_weighted(dv.t[i], Xs), Z)
                rhs = ec.minor_det(Ps[i], Z)
                worst = max(worst, abs(lhs - mid), abs(mid - rhs))
    res["sum_minor"] = worst
    if isinstance(config, TPrimeNConfig):
        Yc = TNConfig(config.Q, config.D, config.k)
        Zc = TNConfig(config.R, config.E, config.k)
        Ys, Zs = assemble(Yc), assemble(Zc)
        res["partial_sums_Y"] = lin(Ys, partial_points(Yc))
        res["partial_sums_Z"] = lin(Zs, partial_points(Zc))
        lhs = ec.mat_sum(
            [ec.scale(l, ec.matmul(ec.transpose(ec.sub(X, base.P)), ec.sub(Y, config.Q))) for l, X, Y in zip(dv.lam, Xs, Ys)]
        )
        rhs = ec.mat_sum(
            [
                ec.scale(k * (k - 1) * l, ec.matmul(ec.transpose(C), D))
                for k, l, C, D in zip(base.k, dv.lam, base.C, config.D)
            ]
        )
        res["quadratic_sum"] = _max_abs(ec.sub(lhs, rhs))
    passed = all(v <= tol for v in res.values())
    out = {key: float(v) for key, v in res.items()}
    out["passed"] = passed
    out["exact"] = tol == 0
    return out


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------


def _t_matrix(lam: np.ndarray, mu: float) -> np.ndarray:
    N = len(lam)
    T = np.empty((N, N))
    for i in range(N):
        v = np.concatenate([mu * lam[:i], lam[i:]])
        T[i] = v / v.sum()
    return T


def _order2_minors(M: np.ndarray) -> np.ndarray:
    n, m = M.shape
    out = [M[a, c] * M[b, d] - M[a, d] * M[b, c] for a in range(n) for b in range(a + 1, n) for c in range(m) for d in range(c + 1, m)]
    return np.asarray(out)


def _tt_residual(p: np.ndarray, Xs: list[np.ndarray]) -> np.ndarray:
    lam = np.append(p[:-1], 1.0 - p[:-1].sum())
    T = _t_matrix(lam, p[-1])
    N = len(Xs)
    rows = []
    for i in range(N):
        acc = sum(T[i, j] * _order2_minors(Xs[j] - Xs[i]) for j in range(N))
        rows.append(acc)
    return np.concatenate(rows)


def witness_from_defining(Xs: Sequence[Any], lam: Sequence[float], mu: float) -> TNConfig:
    """Reconstruct P_i = Σ_j t^i_j X_j, C_i = P_{i+1} − P_i and k_i from X_i = P_i + k_i C_i."""
    X = [np.asarray(x, dtype=float) for x in Xs]
    N = len(X)
    T = _t_matrix(np.asarray(lam, float), float(mu))
    P = [sum(T[i, j] * X[j] for j in range(N)) for i in range(N)]
    C = [P[(i + 1) % N] - P[i] for i in range(N)]
    k = [float(np.sum((X[i] - P[i]) * C[i]) / np.sum(C[i] ** 2)) for i in range(N)]
    return TNConfig(P=P[0].tolist(), C=[c.tolist() for c in C], k=k)


def detect_tn(
    X: Sequence[Matrix],
    *,
    seed: int = 0,
    starts: int = 32,
    tol: float = FLOAT_TOL,
) -> tuple[TNConfig, dict[str, Any]] | None:
    """Search for a T_N witness for the ordered family X₁..X_N.

    Solves Σ_j t^i_j(λ, μ)·S(X_j − X_i) = 0 for all order-2 minors S, in the
    variables (λ₁..λ_{N−1}, μ) with μ ≥ 1 + 1e−6, from ``starts`` Dirichlet-random
    starts.  Among converged solutions with λ > 0 the smallest residual wins, ties
    by smallest μ.  The reconstructed witness is validated with :func:`check_tn`.
    """
    from scipy.optimize import least_squares

    Xf = [np.asarray(x, dtype=float) for x in X]
    N = len(Xf)
    if N < 2:
        raise PreconditionError("need at least two matrices")
    for i in range(N):
        for j in range(i + 1, N):
            if np.array_equal(Xf[i], Xf[j]):
                raise PreconditionError(f"X_{i + 1} and X_{j + 1} coincide")
    scale_ = max(1.0, max(float(np.max(np.abs(x))) for x in Xf))
    rng = np.random.default_rng(seed)
    lo = np.append(np.zeros(N - 1), 1.0 + 1e-6)
    hi = np.append(np.ones(N - 1), np.inf)
    candidates: list[tuple[float, float, np.ndarray]] = []
    for _ in range(starts):
        lam0 = rng.dirichlet(np.ones(N))
        mu0 = 1.0 + rng.exponential(5.0)
        x0 = np.clip(np.append(lam0[:-1], mu0), lo + 1e-12, None)
        sol = least_squares(
            _tt_residual, x0, args=(Xf,), bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000
        )
        lam = np.append(sol.x[:-1], 1.0 - sol.x[:-1].sum())
        if lam.min() <= 0:
            continue
        r = float(np.max(np.abs(sol.fun))) / scale_**2
        candidates.append((r, float(sol.x[-1]), sol.x))
    candidates.sort(key=lambda c: (c[0], c[1]))
    for r, mu, x in candidates:
        if r > tol:
            break
        lam = np.append(x[:-1], 1.0 - x[:-1].sum())
        witness = witness_from_defining(Xf, lam, mu)
        report = check_tn([np.asarray(x_, float).tolist() for x_ in Xf], witness, tol=tol * scale_)
        if report["passed"]:
            report.update({"tt_residual": r, "lambda": lam.tolist(), "mu": mu})
            return witness, report
        log.debug("candidate with residual %.3g rejected: %s", r, report["failures"])
    return None
