"""Graph currents with multiplicity: energies, weak-form residuals and first variations.

For a piecewise-affine u with multiplicity β (constant per cell) the graph current
carries the natural orientation ξ = (e₁ + ∂₁u) ∧ (e₂ + ∂₂u) / |…|.  Its Ψ-energy is
∫ f(Du) β dx when Ψ(W(X)) = f(X).  Stationarity is tested in weak form:

* outer variations, v = b·e_k:  ∫ ⟨Df(Du), Dv⟩ β,
* inner variations, φ = b·e_k:  ∫ ⟨Df(Du), Du Dφ⟩ β − ∫ f(Du) div φ β,

with compactly supported tensor-product quadratic bumps b.  Because Du and β are
constant per cell, both reduce to ⟨β·Y_c, ∫_c ∇b⟩ with Y_c = Df or DuᵀDf − f·I.  The
cell integrals ∫_c ∇b are computed exactly, by a triangle rule of sufficient
degree on cell ∩ supp b.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import kernels
from .convint import PiecewiseAffineMap, _fclip, triangulate
from .extension import ConvexModel, _plucker

ArrayFn = Callable[[np.ndarray], np.ndarray]


class QuadratureError(ValueError):
    """The requested rule cannot integrate the test functions exactly."""


# Dunavant rules on the reference triangle: (barycentric points, weights summing to 1)
_RULES: dict[int, tuple[np.ndarray, np.ndarray]] = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.array([1 / 3, 1 / 3, 1 / 3]),
    ),
    4: (
        np.array(
            [
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
                [0.445948490915965, 0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.445948490915965, 0.108103018168070],
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
                [0.091576213509771, 0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.091576213509771, 0.816847572980459],
            ]
        ),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
    ),
}


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest tabulated rule exact for polynomials of the given degree."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise QuadratureError(f"no triangle rule of degree ≥ {degree} (max {max(_RULES)})")


# ---------------------------------------------------------------------------
# currents and integrands
# ---------------------------------------------------------------------------


@dataclass
class GraphCurrent:
    """⟦Γ_u, ξ_u, β⟧ for a piecewise-affine u with one multiplicity per cell."""

    map: PiecewiseAffineMap
    beta: np.ndarray
    integral: bool = False

    def __post_init__(self) -> None:
        self.beta = np.asarray(self.beta, float)
        if self.beta.shape != (self.map.n_cells,):
            raise ValueError("need one multiplicity per cell")
        if np.any(self.beta <= 0):
            raise ValueError("multiplicities must be positive")
        if self.integral and np.any(self.beta != np.round(self.beta)):
            raise ValueError("integral current needs integer multiplicities")

    @classmethod
    def from_targets(cls, m: PiecewiseAffineMap, K: Any, betas: Sequence[Any], integral: bool = False) -> "GraphCurrent":
        """β of the nearest target on every cell."""
        K = np.asarray(K, float).reshape(-1, 4)
        _, idx = kernels.min_dist_to_set(m.gradients().reshape(m.n_cells, 4), K)
        b = np.array([float(v) for v in betas])
        return cls(m, b[idx], integral)

    def scaled(self, s: float) -> "GraphCurrent":
        return GraphCurrent(self.map, s * self.beta, self.integral and float(s).is_integer())

    @property
    def gradients(self) -> np.ndarray:
        return self.map.gradients()

    @property
    def areas(self) -> np.ndarray:
        return np.array([float(a) for a in self.map.areas()])


@dataclass
class Integrand:
    """f on 2×2 matrices with its derivative, both vectorized over (n, 2, 2)."""

    value: ArrayFn
    gradient: ArrayFn

    def both(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.value(Xs), self.gradient(Xs)


def integrand_from_built(b: Any) -> Integrand:
    """The smooth polyconvex integrand of the counterexample (value and Df)."""
    from .counterexample import eval_integrand_many

    return Integrand(lambda X: eval_integrand_many(b, X)[0], lambda X: eval_integrand_many(b, X)[1])


def quadratic_integrand(kappa: float = 0.0) -> Integrand:
    """f(X) = ½‖X‖² + κ."""
    return Integrand(
        lambda X: 0.5 * np.sum(np.asarray(X, float) ** 2, axis=(1, 2)) + kappa,
        lambda X: np.asarray(X, float).copy(),
    )


def area_integrand() -> Integrand:
    """f = 𝒜(X) = √(1 + ‖X‖² + det² X): the graph area element."""

    def val(X):
        X = np.asarray(X, float)
        d = X[:, 0, 0] * X[:, 1, 1] - X[:, 0, 1] * X[:, 1, 0]
        return np.sqrt(1 + np.sum(X * X, axis=(1, 2)) + d * d)

    def grad(X):
        X = np.asarray(X, float)
        d = X[:, 0, 0] * X[:, 1, 1] - X[:, 0, 1] * X[:, 1, 0]
        cof = np.stack([np.stack([X[:, 1, 1], -X[:, 1, 0]], -1), np.stack([-X[:, 0, 1], X[:, 0, 0]], -1)], 1)
        return (X + d[:, None, None] * cof) / val(X)[:, None, None]

    return Integrand(val, grad)


def phi_of_graph(Xs: np.ndarray) -> np.ndarray:
    """φ(W(X)) = (X column-major, det X, 1) for an array of 2×2 matrices."""
    Xs = np.asarray(Xs, float).reshape(-1, 2, 2)
    d = Xs[:, 0, 0] * Xs[:, 1, 1] - Xs[:, 0, 1] * Xs[:, 1, 0]
    return np.column_stack([Xs[:, 0, 0], Xs[:, 1, 0], Xs[:, 0, 1], Xs[:, 1, 1], d, np.ones(len(d))])


@dataclass
class PerspectivePsi:
    """Ψ(p) = t·h(z/t) on φ-coordinates p = (z, t) with t > 0, and its gradient."""

    model: ConvexModel

    def value(self, P: np.ndarray) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, float))
        z, t = P[:, :-1], P[:, -1]
        if np.any(t <= 0):
            raise ValueError("perspective evaluation needs t > 0 (graph-like 2-vectors)")
        return t * self.model.value(z / t[:, None])

    def gradient(self, P: np.ndarray) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, float))
        z, t = P[:, :-1], P[:, -1]
        w = z / t[:, None]
        g = self.model.gradient(w)
        gt = self.model.value(w) - np.sum(g * w, axis=1)
        return np.column_stack([g, gt])


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


def sigma_energy(T: GraphCurrent, f: Integrand | None = None, *, psi: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Σ_cells f(Du)·β·area, or, given Ψ on φ-coordinates, Σ Ψ(ξ)·𝒜(Du)·β·area with the unit ξ."""
    G = T.gradients
    w = T.beta * T.areas
    if psi is None:
        if f is None:
            raise ValueError("need f or Ψ")
        return float(np.sum(f.value(G) * w))
    P = phi_of_graph(G)
    jac = np.linalg.norm(P, axis=1)
    return float(np.sum(psi(P / jac[:, None]) * jac * w))


def energy_report(T: GraphCurrent, f: Integrand, psi: Callable[[np.ndarray], np.ndarray]) -> dict[str, Any]:
    """Both evaluation routes and their relative disagreement."""
    e_f = sigma_energy(T, f)
    e_psi = sigma_energy(T, psi=psi)
    return {"direct": e_f, "psi_route": e_psi, "relative_difference": abs(e_f - e_psi) / max(1.0, abs(e_f))}


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """b(x, y) = q(x)q(y), q the quadratic 4(t−a)(b−t)/(b−a)² on [a, b], zero outside."""

    x0: float
    x1: float
    y0: float
    y1: float

    degree_of_gradient = 3

    def _q(self, t, a, b):
        return 4 * (t - a) * (b - t) / (b - a) ** 2

    def _dq(self, t, a, b):
        return 4 * (a + b - 2 * t) / (b - a) ** 2

    def grad(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[..., 0], pts[..., 1]
        qx, qy = self._q(x, self.x0, self.x1), self._q(y, self.y0, self.y1)
        return np.stack([self._dq(x, self.x0, self.x1) * qy, qx * self._dq(y, self.y0, self.y1)], -1)

    def box(self) -> list[tuple[float, float]]:
        return [(self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)]


def bump_basis(n: int = 4, domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)) -> list[Bump]:
    """Bumps on the (n−1)² boxes made of 2×2 blocks of an n×n grid, in row-major order."""
    if n < 2:
        raise ValueError("need n ≥ 2")
    x0, x1, y0, y1 = domain
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    return [
        Bump(x0 + i * hx, x0 + (i + 2) * hx, y0 + j * hy, y0 + (j + 2) * hy) for j in range(n - 1) for i in range(n - 1)
    ]


def _cell_gradient_integrals(T: GraphCurrent, bump: Bump, rule: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """(cell indices, ∫_cell ∇b) over the cells meeting supp b."""
    bary, wts = rule
    idx, out = [], []
    for ci, c in enumerate(T.map.cells):
        poly = [(float(x), float(y)) for x, y in c.poly]
        xs, ys = [p[0] for p in poly], [p[1] for p in poly]
        if max(xs) <= bump.x0 or min(xs) >= bump.x1 or max(ys) <= bump.y0 or min(ys) >= bump.y1:
            continue
        clipped = poly
        for nx, ny, cc in ((1.0, 0.0, bump.x0), (-1.0, 0.0, -bump.x1), (0.0, 1.0, bump.y0), (0.0, -1.0, -bump.y1)):
            clipped = _fclip(clipped, nx, ny, cc, slack=0.0)
            if not clipped:
                break
        if not clipped:
            continue
        acc = np.zeros(2)
        for tri in triangulate(clipped):
            V = np.asarray(tri)
            area = 0.5 * abs((V[1, 0] - V[0, 0]) * (V[2, 1] - V[0, 1]) - (V[2, 0] - V[0, 0]) * (V[1, 1] - V[0, 1]))
            pts = bary @ V
            acc += area * (wts @ bump.grad(pts))
        idx.append(ci)
        out.append(acc)
    return np.array(idx, dtype=np.int64), np.array(out).reshape(-1, 2)


def weak_residual(
    T: GraphCurrent,
    f: Integrand,
    basis: Sequence[Bump] | None = None,
    quadrature_degree: int = 4,
) -> dict[str, Any]:
    """Outer and inner residuals for every bump times e₁, e₂; max and RMS over the basis."""
    basis = bump_basis() if basis is None else list(basis)
    if any(quadrature_degree < b.degree_of_gradient for b in basis):
        raise QuadratureError(
            f"degree-{quadrature_degree} rule cannot integrate the degree-{basis[0].degree_of_gradient} bump gradients"
        )
    rule = triangle_rule(quadrature_degree)
    G = T.gradients
    fv, Df = f.both(G)
    Y = T.beta[:, None, None] * Df
    Z = T.beta[:, None, None] * (np.einsum("nji,njk->nik", G, Df) - fv[:, None, None] * np.eye(2)[None])
    outer, inner = [], []
    for bump in basis:
        idx, I = _cell_gradient_integrals(T, bump, rule)
        outer.extend(np.einsum("nkj,nj->k", Y[idx], I))
        inner.extend(np.einsum("nkj,nj->k", Z[idx], I))
    outer_a, inner_a = np.abs(np.array(outer)), np.abs(np.array(inner))
    return {
        "basis_size": 2 * len(basis),
        "outer_max": float(outer_a.max()),
        "outer_rms": float(np.sqrt(np.mean(outer_a**2))),
        "inner_max": float(inner_a.max()),
        "inner_rms": float(np.sqrt(np.mean(inner_a**2))),
        "quadrature_degree": quadrature_degree,
        "_outer": np.array(outer),
        "_inner": np.array(inner),
    }


def residual_report(T: GraphCurrent, f: Integrand, depth: int | None = None, n: int = 4) -> dict[str, Any]:
    """The JSON-ready residual summary."""
    r = weak_residual(T, f, bump_basis(n))
    out = {k: v for k, v in r.items() if not k.startswith("_")}
    out["depth"] = depth
    return out


# ---------------------------------------------------------------------------
# first variation
# ---------------------------------------------------------------------------


@dataclass
class VectorField:
    """g: R⁴ → R⁴ with Jacobian, vectorized over (n, 4); points are (x₁, x₂, u₁, u₂)."""

    value: ArrayFn
    jacobian: ArrayFn


def bump_field(center: Sequence[float], radius: float, direction: Sequence[float]) -> VectorField:
    """g(p) = v·(1 − ‖p − c‖²/r²)³₊: C², compactly supported."""
    c, v = np.asarray(center, float), np.asarray(direction, float)

    def val(P):
        s = 1 - np.sum((P - c) ** 2, axis=1) / radius**2
        return (np.clip(s, 0, None) ** 3)[:, None] * v[None]

    def jac(P):
        s = 1 - np.sum((P - c) ** 2, axis=1) / radius**2
        ds = -2 * (P - c) / radius**2
        coef = 3 * np.clip(s, 0, None) ** 2
        return coef[:, None, None] * v[None, :, None] * ds[:, None, :]

    return VectorField(val, jac)


def translation_field(direction: Sequence[float], radius: float) -> VectorField:
    """Constant v on the ball of the given radius (so on any graph inside it), smoothly cut off beyond."""
    v = np.asarray(direction, float)

    def cut(r):
        t = np.clip((r - radius) / radius, 0, 1)
        return 1 - t * t * (3 - 2 * t)

    def dcut(r):
        t = np.clip((r - radius) / radius, 0, 1)
        return np.where((t > 0) & (t < 1), -6 * t * (1 - t) / radius, 0.0)

    def val(P):
        return cut(np.linalg.norm(P, axis=1))[:, None] * v[None]

    def jac(P):
        r = np.linalg.norm(P, axis=1)
        g = dcut(r)[:, None] * P / np.maximum(r, 1e-300)[:, None]
        return v[None, :, None] * g[:, None, :]

    return VectorField(val, jac)


def _graph_samples(T: GraphCurrent, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature points on the cells: (points in R⁴, weights·β, cell gradients)."""
    bary, wts = triangle_rule(degree)
    pts, ws, gs = [], [], []
    for c, beta in zip(T.map.cells, T.beta):
        for tri in triangulate(c.poly):
            V = np.array([[float(x), float(y)] for x, y in tri])
            area = 0.5 * abs((V[1, 0] - V[0, 0]) * (V[2, 1] - V[0, 1]) - (V[2, 0] - V[0, 0]) * (V[1, 1] - V[0, 1]))
            X = bary @ V
            U = X @ c.grad.T + c.offset
            pts.append(np.hstack([X, U]))
            ws.append(area * beta * wts)
            gs.append(np.repeat(c.grad[None], len(wts), 0))
    return np.vstack(pts), np.concatenate(ws), np.vstack(gs)


def _tangents(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """M^j = (e_j, Du·e_j) ∈ R⁴ for every sample, shape (n, 4)."""
    n = len(G)
    M1 = np.column_stack([np.ones(n), np.zeros(n), G[:, 0, 0], G[:, 1, 0]])
    M2 = np.column_stack([np.zeros(n), np.ones(n), G[:, 0, 1], G[:, 1, 1]])
    return M1, M2


def pushed_energy(T: GraphCurrent, psi: PerspectivePsi, g: VectorField, h: float, substeps: int = 8, degree: int = 4) -> float:
    """Ψ-energy of the push-forward of the graph by the Euler-integrated time-h flow of g."""
    P, w, G = _graph_samples(T, degree)
    M1, M2 = _tangents(G)
    x = P.copy()
    dt = h / substeps
    for _ in range(substeps):
        J = g.jacobian(x)
        M1 = M1 + dt * np.einsum("nij,nj->ni", J, M1)
        M2 = M2 + dt * np.einsum("nij,nj->ni", J, M2)
        x = x + dt * g.value(x)
    return float(np.sum(w * psi.value(_plucker(M1.T, M2.T).T)))


def first_variation(
    T: GraphCurrent, psi: PerspectivePsi, g: VectorField, h_step: float = 1e-3, degree: int = 4
) -> dict[str, Any]:
    """δΣ_Ψ(T)(g) = ∫ ⟨∇Ψ(M¹∧M²), Dg·M¹∧M² + M¹∧Dg·M²⟩ β dx, against a central difference of the pushed energy."""
    P, w, G = _graph_samples(T, degree)
    M1, M2 = _tangents(G)
    J = g.jacobian(P)
    DM1, DM2 = np.einsum("nij,nj->ni", J, M1), np.einsum("nij,nj->ni", J, M2)
    tau = _plucker(M1.T, M2.T).T
    dtau = _plucker(DM1.T, M2.T).T + _plucker(M1.T, DM2.T).T
    formula = float(np.sum(w * np.sum(psi.gradient(tau) * dtau, axis=1)))
    fd = (pushed_energy(T, psi, g, h_step, degree=degree) - pushed_energy(T, psi, g, -h_step, degree=degree)) / (
        2 * h_step
    )
    return {"formula": formula, "finite_difference": fd, "h": h_step, "difference": abs(formula - fd)}
