"""Exterior algebra Λ_m(R^{n+m}) in small dimension, area elements and graph frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Sequence

import numpy as np

from .exact_core import ShapeError, det


def basis_indices(ambient: int, degree: int) -> list[tuple[int, ...]]:
    """Increasing multi-indices (0-based): E₁ = (0,…,m−1) first, the rest lexicographic."""
    if not 0 < degree <= ambient:
        raise ShapeError("degree must lie in 1..ambient")
    rest = list(combinations(range(ambient), degree))
    first = tuple(range(degree))
    rest.remove(first)
    return [first] + rest


@dataclass
class MultiVector:
    ambient: int
    degree: int
    coeffs: list[Any]
    index: dict[tuple[int, ...], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        idx = basis_indices(self.ambient, self.degree)
        if len(self.coeffs) != len(idx):
            raise ShapeError(f"expected {len(idx)} coefficients, got {len(self.coeffs)}")
        self.index = {I: k for k, I in enumerate(idx)}

    def coeff(self, I: Sequence[int]) -> Any:
        """Coefficient on e_{I₁}∧…∧e_{I_m} for an arbitrary (unsorted) 0-based index tuple."""
        order = sorted(range(len(I)), key=lambda a: I[a])
        srt = tuple(I[a] for a in order)
        if len(set(srt)) < len(srt):
            return 0 * self.coeffs[0]
        sign = _perm_sign(order)
        return sign * self.coeffs[self.index[srt]]

    def __add__(self, other: "MultiVector") -> "MultiVector":
        _same_space(self, other)
        return MultiVector(self.ambient, self.degree, [a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __neg__(self) -> "MultiVector":
        return MultiVector(self.ambient, self.degree, [-a for a in self.coeffs])

    def __sub__(self, other: "MultiVector") -> "MultiVector":
        return self + (-other)

    def scaled(self, s: Any) -> "MultiVector":
        return MultiVector(self.ambient, self.degree, [s * a for a in self.coeffs])

    def norm(self) -> float:
        return math.sqrt(float(mvec_inner(self, self)))

    def to_json(self) -> dict[str, Any]:
        return {"ambient": self.ambient, "degree": self.degree, "coeffs": [float(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "MultiVector":
        return cls(int(data["ambient"]), int(data["degree"]), list(data["coeffs"]))


def _perm_sign(perm: Sequence[int]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _same_space(a: MultiVector, b: MultiVector) -> None:
    if (a.ambient, a.degree) != (b.ambient, b.degree):
        raise ShapeError("multivectors live in different spaces")


def wedge(vectors: Sequence[Sequence[Any]]) -> MultiVector:
    """v₁∧…∧v_m expanded on the increasing-index basis (coefficient = minor of rows I)."""
    m = len(vectors)
    if m == 0:
        raise ShapeError("need at least one vector")
    dim = len(vectors[0])
    if any(len(v) != dim for v in vectors):
        raise ShapeError("vectors of different dimensions")
    coeffs = [det([[vectors[b][i] for b in range(m)] for i in I]) for I in basis_indices(dim, m)]
    return MultiVector(dim, m, coeffs)


def basis_blade(ambient: int, I: Sequence[int]) -> MultiVector:
    """e_{I₁}∧…∧e_{I_m} (0-based, any order) as a multivector."""
    vecs = [[1 if k == i else 0 for k in range(ambient)] for i in I]
    return wedge(vecs)


def mvec_inner(tau: MultiVector, sigma: MultiVector) -> Any:
    """Induced inner product; on simple vectors it equals the Gram determinant."""
    _same_space(tau, sigma)
    total: Any = 0
    for a, b in zip(tau.coeffs, sigma.coeffs):
        total = total + a * b
    return total


# Slot table for Λ₂(R⁴): slot k reads sign·coefficient on the sorted 0-based pair.
# Slots in order: ⟨τ,e₃∧e₂⟩, ⟨τ,e₄∧e₂⟩, ⟨τ,e₁∧e₃⟩, ⟨τ,e₁∧e₄⟩, ⟨τ,e₃∧e₄⟩, ⟨τ,e₁∧e₂⟩.
# With this table phi(W(X)) = (X₁₁, X₂₁, X₁₂, X₂₂, det X, 1): the first four slots are
# X flattened column-major, all with + sign.
PHI_SLOTS_2x2: tuple[tuple[tuple[int, int], int], ...] = (
    ((1, 2), -1),
    ((1, 3), -1),
    ((0, 2), +1),
    ((0, 3), +1),
    ((2, 3), +1),
    ((0, 1), +1),
)


def phi_coords(tau: MultiVector) -> list[Any]:
    """Coordinate map Λ_m(R^{n+m}) → R^{C(n+m,m)}.

    For Λ₂(R⁴) the slots follow :data:`PHI_SLOTS_2x2`.  In general the non-E₁ basis
    components come first (lexicographic order) and the E₁ component is last.
    """
    if (tau.ambient, tau.degree) == (4, 2):
        return [sign * tau.coeffs[tau.index[I]] for I, sign in PHI_SLOTS_2x2]
    return list(tau.coeffs[1:]) + [tau.coeffs[0]]


def phi_inverse(coords: Sequence[Any], ambient: int = 4, degree: int = 2) -> MultiVector:
    """Inverse of :func:`phi_coords`."""
    if (ambient, degree) == (4, 2):
        idx = basis_indices(4, 2)
        coeffs: list[Any] = [0.0] * 6
        pos = {I: k for k, I in enumerate(idx)}
        for (I, sign), v in zip(PHI_SLOTS_2x2, coords):
            coeffs[pos[I]] = sign * v
        return MultiVector(4, 2, coeffs)
    return MultiVector(ambient, degree, [coords[-1]] + list(coords[:-1]))


# ---------------------------------------------------------------------------
# area element and graph frames
# ---------------------------------------------------------------------------


def area(X: Any) -> float:
    """𝒜(X) = √det(I + XᵀX) for an n×m matrix X."""
    X = np.asarray(X, dtype=float)
    m = X.shape[1]
    return float(math.sqrt(np.linalg.det(np.eye(m) + X.T @ X)))


def area_2x2(X: Any, d: float | None = None) -> float:
    """a(X, d) = √(1 + ‖X‖² + d²) with d = det X by default (2×2 only)."""
    X = np.asarray(X, dtype=float)
    if d is None:
        d = X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]
    return float(math.sqrt(1.0 + float(np.sum(X * X)) + d * d))


def area_2x2_grad(X: Any) -> np.ndarray:
    """D𝒜(X) for 2×2 X: (X + det(X)·cof(X)) / 𝒜(X)."""
    X = np.asarray(X, dtype=float)
    d = X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]
    cof = np.array([[X[1, 1], -X[1, 0]], [-X[0, 1], X[0, 0]]])
    return (X + d * cof) / area_2x2(X, d)


@dataclass
class GraphFrame:
    X: np.ndarray
    M: np.ndarray
    S: np.ndarray
    h: np.ndarray
    W: MultiVector
    area: float


def graph_frame(X: Any) -> GraphFrame:
    """M(X) = [I; X], S = (MᵀM)⁻¹, h = M S Mᵀ, W(X) = ∧ columns of M, 𝒜(X)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("X must be a matrix")
    n, m = X.shape
    M = np.vstack([np.eye(m), X])
    G = M.T @ M
    S = np.linalg.inv(G)
    h = M @ S @ M.T
    W = wedge([list(M[:, j]) for j in range(m)])
    return GraphFrame(X=X, M=M, S=S, h=h, W=W, area=float(math.sqrt(np.linalg.det(G))))
