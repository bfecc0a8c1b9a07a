"""Greedy basis index sets of a cyclic normal family, the W matrix and its kernel certificate."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import exact_core as ec
from .exact_core import Matrix, PreconditionError
from .tn_algebra import TNConfig, TPrimeNConfig, defining_vector

GRAM_TOL = 1e-10


class AdmissibilityError(ValueError):
    """Consecutive normals are parallel."""


class ConsistencyError(RuntimeError):
    """The exact-kernel and h-map verdicts disagree."""


@dataclass
class NormalFamily:
    normals: list[list[Any]]

    @property
    def N(self) -> int:
        return len(self.normals)

    @property
    def m(self) -> int:
        return len(self.normals[0])

    @property
    def exact(self) -> bool:
        return not any(isinstance(v, float) for n in self.normals for v in n)

    def at(self, k: int) -> list[Any]:
        """n_k for 1-based cyclic k."""
        return self.normals[(k - 1) % self.N]


@dataclass
class WStructure:
    Sbar: list[list[int]]
    S: list[list[int]]
    S1: list[list[int]]
    S2: list[list[int]]
    C: int
    W: Matrix
    mu: Any
    I_map: list[int | None]

    @property
    def N(self) -> int:
        return len(self.W)

    def to_json(self) -> dict[str, Any]:
        return {
            "Sbar": self.Sbar,
            "S": self.S,
            "S_prime": self.S1,
            "S_double_prime": self.S2,
            "C": self.C,
            "W": _mat_json(self.W),
            "mu": _num_json(self.mu),
            "I_map": self.I_map,
        }


def _num_json(v: Any) -> Any:
    return ec.fraction_to_str(v) if isinstance(v, (Fraction, int)) else float(v)


def _mat_json(M: Matrix) -> list[list[Any]]:
    return [[_num_json(v) for v in r] for r in M]


def _independent(vectors: Sequence[Sequence[Any]], exact: bool) -> bool:
    if exact:
        return ec.rank([list(v) for v in vectors]) == len(vectors)
    A = np.asarray(vectors, dtype=float)
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    return float(np.linalg.det(A @ A.T)) > GRAM_TOL


def build_w(normals: NormalFamily, mu: Any) -> WStructure:
    """S̄_i by a greedy left-to-right independence scan of n_i, …, n_{i+N−1}; then W."""
    N = normals.N
    if N < 2:
        raise PreconditionError("need at least two normals")
    if not mu > 1:
        raise PreconditionError("mu must exceed 1")
    exact = normals.exact
    for i in range(1, N + 1):
        if not _independent([normals.at(i), normals.at(i + 1)], exact):
            raise AdmissibilityError(f"n_{i} and n_{(i % N) + 1} are parallel")
    Sbar: list[list[int]] = []
    for i in range(1, N + 1):
        chosen = [i]
        for k in range(i + 1, i + N):
            if _independent([normals.at(s) for s in chosen] + [normals.at(k)], exact):
                chosen.append(k)
        Sbar.append(chosen)
    S = [sorted({(k - 1) % N + 1 for k in sb}) for sb in Sbar]
    S1 = [[k for k in s if k >= i] for i, s in enumerate(S, start=1)]
    S2 = [[k for k in s if k < i] for i, s in enumerate(S, start=1)]
    one = Fraction(1) if exact and not isinstance(mu, float) else 1.0
    zero = 0 * one
    W = [[one if j in S1[i] else (mu if j in S2[i] else zero) for j in range(1, N + 1)] for i in range(N)]
    C = len(Sbar[0])
    if any(len(sb) != C for sb in Sbar):
        raise ConsistencyError("index sets of different cardinality")
    I_map: list[int | None] = []
    for i in range(1, N + 1):
        cur = set(Sbar[i - 1])
        nxt = set(Sbar[i % N]) if i < N else {k + N for k in Sbar[0]}
        sym = cur ^ nxt
        if not sym:
            I_map.append(None)
            continue
        if len(sym) != 2 or i not in cur - nxt:
            raise ConsistencyError(f"consecutive index sets {i}, {i % N + 1} differ by {sorted(sym)}")
        (I,) = nxt - cur
        I_map.append(I)
    return WStructure(Sbar=Sbar, S=S, S1=S1, S2=S2, C=C, W=W, mu=mu, I_map=I_map)


def w_from_matrix(W: Matrix, mu: Any) -> WStructure:
    """Wrap an explicit matrix (for control cases such as μ = 1) without index-set data."""
    N = len(W)
    return WStructure(Sbar=[], S=[], S1=[], S2=[], C=0, W=[list(r) for r in W], mu=mu, I_map=[None] * N)


def h_map(W: Matrix, mu: Any) -> dict[str, Any]:
    """Row differences W_i − W_{i+1} (and W_N − μW₁) as relations x_i = a_i x_{h(i)}.

    Returns h, a (1-based) and whether every cycle of h carries a product of a's ≠ 1,
    which forces x = 0.  ``applicable`` is False when a difference row involves other
    entries than i and one partner index.
    """
    N = len(W)
    h: list[int] = []
    a: list[Any] = []
    for i in range(N):
        nxt = W[i + 1] if i + 1 < N else [mu * v for v in W[0]]
        diff = [p - q for p, q in zip(W[i], nxt)]
        nz = [j for j, v in enumerate(diff) if v != 0]
        alpha = diff[i]
        others = [j for j in nz if j != i]
        if alpha == 0 or len(others) > 1:
            return {"applicable": False, "h": h, "a": [_num_json(v) for v in a], "certified": False, "row": i + 1}
        if not others:
            h.append(i + 1)
            a.append(1 - alpha)  # αx_i = 0 ⇔ x_i = (1 − α)x_i
        else:
            j = others[0]
            h.append(j + 1)
            a.append(-diff[j] / alpha)
    certified = True
    cycles = []
    seen: set[int] = set()
    for start in range(1, N + 1):
        path = []
        node = start
        while node not in path and node not in seen:
            path.append(node)
            node = h[node - 1]
        if node in path:
            cyc = path[path.index(node):]
            prod: Any = 1
            for v in cyc:
                prod = prod * a[v - 1]
            cycles.append({"cycle": cyc, "product": _num_json(prod)})
            if prod == 1:
                certified = False
        seen.update(path)
    return {"applicable": True, "h": h, "a": [_num_json(v) for v in a], "cycles": cycles, "certified": certified}


def _kernel_of(W: Matrix) -> list[list[Any]]:
    if any(isinstance(v, float) for r in W for v in r):
        A = np.asarray(W, float)
        _, s, vt = np.linalg.svd(A)
        return [list(v) for v, sv in zip(vt, list(s) + [0.0] * (A.shape[1] - len(s))) if sv < 1e-10]
    return ec.kernel(W)


def kernel_trivial(ws: WStructure) -> tuple[bool, dict[str, Any]]:
    """Two verdicts on Ker W = {0}: exact Gaussian elimination and the h-map reduction.

    The h-map only certifies triviality; a disagreement is an internal error only
    when the h-map certifies a matrix with a nontrivial kernel, or a valid W (μ > 1
    built from normals) is not certified.
    """
    basis = _kernel_of(ws.W)
    exact_verdict = not basis
    hm = h_map(ws.W, ws.mu)
    h_verdict = bool(hm["certified"])
    from_normals = bool(ws.Sbar)
    if h_verdict and not exact_verdict:
        raise ConsistencyError("h-map certified a matrix with nontrivial kernel")
    if from_normals and ws.mu > 1 and h_verdict != exact_verdict:
        raise ConsistencyError(f"verdicts disagree: exact={exact_verdict}, h-map={h_verdict}")
    cert = {
        "Sbar": ws.Sbar,
        "W": _mat_json(ws.W),
        "h": hm["h"],
        "a": hm["a"],
        "cycles": hm.get("cycles", []),
        "h_applicable": hm["applicable"],
        "kernel_basis": [[_num_json(v) for v in b] for b in basis],
        "exact_verdict": exact_verdict,
        "h_verdict": h_verdict,
    }
    return exact_verdict, cert


# ---------------------------------------------------------------------------
# the matrices M_i of a T'_N configuration
# ---------------------------------------------------------------------------


def m_matrices(
    config: TPrimeNConfig, beta: Sequence[Any] | None = None, c: Sequence[Any] | None = None
) -> tuple[list[Matrix], dict[str, Any]]:
    """M_i = μ Σ_{j<i} α_j C_jᵀD_j + Σ_{j≥i} α_j C_jᵀD_j with α_j = k_j(k_j − 1)λ_j.

    Always verified: trace(M_i) = 0 and (M_i − M_{i+a}) n_{i+a} ∈ span{n_i..n_{i+a−1}}.
    When β and c are supplied and the eigen relation M_i n_i = ξ_i μ_i n_i holds, the
    generalized-eigen relations, the triangular diagonal and W x = 0 for x_j = ξ_j μ_j
    are verified as well.
    """
    base = config.base
    N = base.N
    if len(config.n_dir) != N:
        raise PreconditionError("the T'_N witness needs its directions n_i")
    dv = defining_vector(base.k)
    exact = not any(isinstance(v, float) for v in list(base.k) + [x for n in config.n_dir for x in n])
    tol = 0 if exact else 1e-10
    CtD = [ec.matmul(ec.transpose(C), D) for C, D in zip(base.C, config.D)]
    alpha = [k * (k - 1) * lam for k, lam in zip(base.k, dv.lam)]
    M: list[Matrix] = []
    for i in range(N):
        terms = [ec.scale((dv.mu if j < i else 1) * alpha[j], CtD[j]) for j in range(N)]
        M.append(ec.mat_sum(terms))
    Mext = M + [ec.scale(dv.mu, Mi) for Mi in M]
    nrm = [list(v) for v in config.n_dir]
    nat = lambda s: nrm[(s - 1) % N]  # 1-based cyclic
    traces = [sum(Mi[r][r] for r in range(len(Mi))) for Mi in M]
    via_res: Any = 0
    for i in range(1, N + 1):
        for a in range(0, N):
            diff = ec.sub(Mext[i - 1], Mext[i + a - 1])
            v = ec.matvec(diff, nat(i + a))
            span = [nat(s) for s in range(i, i + a)]
            via_res = max(via_res, _dist_to_span(v, span, exact))
    report: dict[str, Any] = {
        "traces": [_num_json(t) for t in traces],
        "trace_free": all(abs(t) <= tol for t in traces),
        "via_residual": _num_json(via_res),
        "via_holds": via_res <= tol,
        "exact": exact,
    }
    if beta is not None and c is not None:
        from .tn_algebra import assemble

        Ys = assemble(TNConfig(config.Q, config.D, config.k))
        mus = []
        for i in range(N):
            mu_i = base.k[i] * ec.frob(base.C[i], Ys[i]) - beta[i] * c[i]
            mu_i += sum((beta[j] * dv.t[i][j] * c[j] for j in range(N)), start=0 * dv.mu)
            mus.append(mu_i)
        eig = [ec.matvec(M[i], nrm[i]) for i in range(N)]
        eig_res = max(max(abs(p - dv.xi[i] * mus[i] * q) for p, q in zip(eig[i], nrm[i])) for i in range(N))
        report["eigen_residual"] = _num_json(eig_res)
        report["eigen_holds"] = eig_res <= tol
        if eig_res <= tol:
            x = [dv.xi[j] * mus[j] for j in range(N)]
            fam = NormalFamily(nrm)
            ws = build_w(fam, dv.mu)
            Wx = ec.matvec(ws.W, x)
            gen_res: Any = 0
            for i in range(1, N + 1):
                for a in range(N):
                    s = i + a
                    fac = x[(s - 1) % N] * (1 if s <= N else dv.mu)
                    v = [p - fac * q for p, q in zip(ec.matvec(M[i - 1], nat(s)), nat(s))]
                    gen_res = max(gen_res, _dist_to_span(v, [nat(r) for r in range(i, s)], exact))
            report.update(
                {
                    "mu_i": [_num_json(v) for v in mus],
                    "x": [_num_json(v) for v in x],
                    "Wx": [_num_json(v) for v in Wx],
                    "Wx_zero": all(abs(v) <= tol for v in Wx),
                    "generalized_eigen_residual": _num_json(gen_res),
                    "generalized_eigen_holds": gen_res <= tol,
                }
            )
    return M, report


def _dist_to_span(v: Sequence[Any], span: Sequence[Sequence[Any]], exact: bool) -> Any:
    """‖v − proj_span v‖_∞ (exact by solving the normal equations on a basis)."""
    if not span:
        return max(abs(x) for x in v)
    if exact:
        basis: list[list[Any]] = []
        for s in span:
            if ec.rank(basis + [list(s)]) > len(basis):
                basis.append(list(s))
        if ec.rank(basis + [list(v)]) == len(basis):
            return Fraction(0)
        G = [[sum(p * q for p, q in zip(b1, b2)) for b2 in basis] for b1 in basis]
        rhs = [[sum(p * q for p, q in zip(b, v))] for b in basis]
        coef = ec.matmul(ec.inverse(G), rhs)
        proj = [sum(coef[k][0] * basis[k][r] for k in range(len(basis))) for r in range(len(v))]
        return max(abs(p - q) for p, q in zip(v, proj))
    A = np.asarray(span, float).T
    vv = np.asarray(v, float)
    coef, *_ = np.linalg.lstsq(A, vv, rcond=None)
    return float(np.max(np.abs(vv - A @ coef)))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def example_family(name: str) -> NormalFamily:
    """Normal families realizing the three N = 4 index-set patterns (C = 2, 4, 3)."""
    q = lambda *r: [Fraction(x) for x in r]
    if name == "e1":
        return NormalFamily([q(1, 0), q(0, 1), q(1, 1), q(1, -1)])
    if name == "e2":
        return NormalFamily([q(1, 0, 0, 0), q(0, 1, 0, 0), q(0, 0, 1, 0), q(0, 0, 0, 1)])
    if name == "e3":
        return NormalFamily([q(1, 0, 0), q(0, 1, 0), q(1, 1, 0), q(0, 0, 1)])
    raise KeyError(name)


def random_family(rng: np.random.Generator, N: int, m: int, rank: int | None = None) -> NormalFamily:
    """Random integer normals spanning a ``rank``-dimensional subspace, no consecutive parallels."""
    rank = rank or int(rng.integers(1, min(m, N) + 1))
    rank = max(rank, 2)
    basis = rng.integers(-3, 4, size=(rank, m))
    while np.linalg.matrix_rank(basis) < rank:
        basis = rng.integers(-3, 4, size=(rank, m))
    while True:
        coef = rng.integers(-2, 3, size=(N, rank))
        vecs = coef @ basis
        fam = NormalFamily([[Fraction(int(x)) for x in v] for v in vecs])
        if any(all(x == 0 for x in v) for v in fam.normals):
            continue
        ok = all(_independent([fam.at(i), fam.at(i + 1)], True) for i in range(1, N + 1))
        if ok:
            return fam
