"""Dense small-matrix algebra over exact rationals (and, transparently, floats).

Matrices are plain row-major nested lists.  Every routine works with any
field-like scalar type (``fractions.Fraction``, ``int``, ``float``); exact
verdicts are obtained by feeding ``Fraction`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Any, Iterable, Sequence

Scalar = Any
Matrix = list[list[Scalar]]


class ShapeError(ValueError):
    """Raised when matrix shapes or indices are incompatible."""


class PreconditionError(ValueError):
    """Raised when an operation's mathematical precondition is violated."""


# ---------------------------------------------------------------------------
# construction / conversion
# ---------------------------------------------------------------------------


def to_fraction(x: Any) -> Fraction:
    """Convert ints, Fractions, ``"p/q"`` strings or floats (exactly) to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x)


def qmat(rows: Iterable[Iterable[Any]]) -> Matrix:
    """Build a rational matrix from nested iterables."""
    out = [[to_fraction(v) for v in row] for row in rows]
    _check_rect(out)
    return out


def fmat(rows: Iterable[Iterable[Any]]) -> Matrix:
    """Build a float matrix (nested lists) from nested iterables."""
    out = [[float(v) for v in row] for row in rows]
    _check_rect(out)
    return out


def _check_rect(M: Sequence[Sequence[Scalar]]) -> None:
    if not M:
        return
    w = len(M[0])
    if any(len(r) != w for r in M):
        raise ShapeError("ragged matrix")


def shape(M: Sequence[Sequence[Scalar]]) -> tuple[int, int]:
    return (len(M), len(M[0]) if M else 0)


def identity(n: int, one: Scalar = Fraction(1)) -> Matrix:
    zero = one - one
    return [[one if i == j else zero for j in range(n)] for i in range(n)]


def zeros(r: int, c: int, zero: Scalar = Fraction(0)) -> Matrix:
    return [[zero for _ in range(c)] for _ in range(r)]


def fraction_to_str(q: Fraction) -> str:
    """Serialize a rational as ``"p/q"`` (always with an explicit denominator)."""
    q = to_fraction(q)
    return f"{q.numerator}/{q.denominator}"


def matrix_to_json(M: Sequence[Sequence[Scalar]]) -> list[list[Any]]:
    """Row-major nested list; rationals become ``"p/q"`` strings, floats stay floats."""
    return [[fraction_to_str(v) if isinstance(v, (Fraction, int)) else float(v) for v in row] for row in M]


def matrix_from_json(data: Sequence[Sequence[Any]]) -> Matrix:
    """Inverse of :func:`matrix_to_json`; strings and ints become Fractions."""
    out: Matrix = []
    for row in data:
        out.append([v if isinstance(v, float) else to_fraction(v) for v in row])
    _check_rect(out)
    return out


# ---------------------------------------------------------------------------
# elementary algebra
# ---------------------------------------------------------------------------


def transpose(M: Sequence[Sequence[Scalar]]) -> Matrix:
    return [list(col) for col in zip(*M)]


def add(A: Sequence[Sequence[Scalar]], B: Sequence[Sequence[Scalar]]) -> Matrix:
    if shape(A) != shape(B):
        raise ShapeError(f"add: {shape(A)} vs {shape(B)}")
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def sub(A: Sequence[Sequence[Scalar]], B: Sequence[Sequence[Scalar]]) -> Matrix:
    if shape(A) != shape(B):
        raise ShapeError(f"sub: {shape(A)} vs {shape(B)}")
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def scale(s: Scalar, A: Sequence[Sequence[Scalar]]) -> Matrix:
    return [[s * a for a in row] for row in A]


def matmul(A: Sequence[Sequence[Scalar]], B: Sequence[Sequence[Scalar]]) -> Matrix:
    ra, ca = shape(A)
    rb, cb = shape(B)
    if ca != rb:
        raise ShapeError(f"matmul: {ra}x{ca} @ {rb}x{cb}")
    Bt = transpose(B)
    return [[sum((x * y for x, y in zip(row, col)), start=0 * row[0] if row else 0) for col in Bt] for row in A]


def matvec(A: Sequence[Sequence[Scalar]], v: Sequence[Scalar]) -> list[Scalar]:
    if shape(A)[1] != len(v):
        raise ShapeError("matvec: size mismatch")
    return [sum((a * b for a, b in zip(row, v)), start=0 * v[0] if v else 0) for row in A]


def frob(A: Sequence[Sequence[Scalar]], B: Sequence[Sequence[Scalar]]) -> Scalar:
    """Frobenius inner product ⟨A, B⟩ = tr(AᵀB)."""
    if shape(A) != shape(B):
        raise ShapeError("frob: shape mismatch")
    total: Scalar = 0
    for ra, rb in zip(A, B):
        for a, b in zip(ra, rb):
            total = total + a * b
    return total


def outer(u: Sequence[Scalar], v: Sequence[Scalar]) -> Matrix:
    return [[a * b for b in v] for a in u]


def mat_sum(mats: Iterable[Sequence[Sequence[Scalar]]], like: Sequence[Sequence[Scalar]] | None = None) -> Matrix:
    acc: Matrix | None = None
    for M in mats:
        acc = [list(r) for r in M] if acc is None else add(acc, M)
    if acc is None:
        if like is None:
            raise ShapeError("mat_sum of empty sequence needs a shape template")
        return zeros(*shape(like))
    return acc


def is_zero(M: Sequence[Sequence[Scalar]], tol: float = 0.0) -> bool:
    return all(abs(v) <= tol for row in M for v in row)


# ---------------------------------------------------------------------------
# determinants, minors, adjugate
# ---------------------------------------------------------------------------


def det(A: Sequence[Sequence[Scalar]]) -> Scalar:
    """Determinant by Gaussian elimination with pivoting (exact on Fractions).

    The 0×0 determinant is 1.
    """
    n, c = shape(A)
    if n != c:
        raise ShapeError("det of non-square matrix")
    if n == 0:
        return Fraction(1)
    if n == 1:
        return A[0][0]
    if n == 2:
        return A[0][0] * A[1][1] - A[0][1] * A[1][0]
    M = [list(r) for r in A]
    sign = 1
    exact = not any(isinstance(v, float) for r in M for v in r)
    result: Scalar = 1
    for col in range(n):
        if exact:
            piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        else:
            piv = max(range(col, n), key=lambda r: abs(M[r][col]))
            if M[piv][col] == 0:
                piv = None
        if piv is None:
            return 0 * A[0][0]
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            sign = -sign
        p = M[col][col]
        result = result * p
        for r in range(col + 1, n):
            f = M[r][col]
            if f == 0:
                continue
            q = f / p
            Mr, Mc = M[r], M[col]
            for k in range(col, n):
                Mr[k] = Mr[k] - q * Mc[k]
    return sign * result


@dataclass(frozen=True)
class MultiIndexPair:
    """Row and column index tuples (0-based, strictly increasing) of equal length."""

    I: tuple[int, ...]
    J: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.I) != len(self.J) or not self.I:
            raise ShapeError("multi-index pair needs equal, positive lengths")
        for idx in (self.I, self.J):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ShapeError("multi-indices must be strictly increasing")

    @property
    def order(self) -> int:
        return len(self.I)

    def compose(self, inner: "MultiIndexPair") -> "MultiIndexPair":
        """Index pair Z with minor(minor(M, self), inner) == minor(M, Z)."""
        return MultiIndexPair(tuple(self.I[a] for a in inner.I), tuple(self.J[b] for b in inner.J))


def all_index_pairs(rows: int, cols: int, r: int) -> list[MultiIndexPair]:
    """Every multi-index pair of order ``r`` for a rows×cols matrix."""
    return [MultiIndexPair(I, J) for I in combinations(range(rows), r) for J in combinations(range(cols), r)]


def minor(M: Sequence[Sequence[Scalar]], Z: MultiIndexPair) -> Matrix:
    """The r×r submatrix with rows Z.I and columns Z.J (order preserved)."""
    rows, cols = shape(M)
    if max(Z.I) >= rows or max(Z.J) >= cols or min(Z.I) < 0 or min(Z.J) < 0:
        raise ShapeError(f"index pair {Z} out of range for {rows}x{cols}")
    return [[M[i][j] for j in Z.J] for i in Z.I]


def minor_det(M: Sequence[Sequence[Scalar]], Z: MultiIndexPair) -> Scalar:
    return det(minor(M, Z))


def adjugate(A: Sequence[Sequence[Scalar]]) -> Matrix:
    """cof(A) with cof(A)_{ij} = (−1)^{i+j} det(A with row j and column i removed)."""
    n, c = shape(A)
    if n != c:
        raise ShapeError("adjugate of non-square matrix")
    one = A[0][0] ** 0 if n else Fraction(1)
    if n == 1:
        return [[one]]
    out = zeros(n, n, zero=one - one)
    for i in range(n):
        for j in range(n):
            sub_m = [[A[r][s] for s in range(n) if s != i] for r in range(n) if r != j]
            d = det(sub_m)
            out[i][j] = d if (i + j) % 2 == 0 else -d
    return out


def rank(M: Sequence[Sequence[Scalar]], tol: float = 0.0) -> int:
    """Row rank by elimination; ``tol`` is the float pivot threshold (0 → exact)."""
    return len(_rref(M, tol)[1])


def _rref(M: Sequence[Sequence[Scalar]], tol: float = 0.0) -> tuple[Matrix, list[int]]:
    A = [list(r) for r in M]
    rows, cols = shape(A)
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        if tol > 0:
            piv = max(range(r, rows), key=lambda i: abs(A[i][c]))
            if abs(A[piv][c]) <= tol:
                continue
        else:
            piv = next((i for i in range(r, rows) if A[i][c] != 0), None)
            if piv is None:
                continue
        A[r], A[piv] = A[piv], A[r]
        p = A[r][c]
        A[r] = [v / p for v in A[r]]
        for i in range(rows):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    return A, pivots


def kernel(M: Sequence[Sequence[Scalar]]) -> list[list[Scalar]]:
    """Exact basis of {v : M v = 0}; empty list iff the kernel is trivial.

    Basis vectors are scaled so that their first nonzero entry is 1.
    """
    rows, cols = shape(M)
    if cols == 0:
        return []
    R, pivots = _rref(M)
    free = [c for c in range(cols) if c not in pivots]
    basis: list[list[Scalar]] = []
    one = Fraction(1)
    for f in free:
        v: list[Scalar] = [one - one] * cols
        v[f] = one
        for r, pc in enumerate(pivots):
            v[pc] = -R[r][f]
        lead = next(x for x in v if x != 0)
        basis.append([x / lead for x in v])
    return basis


def det_rank_one_update(A: Sequence[Sequence[Scalar]], B: Sequence[Sequence[Scalar]]) -> Scalar:
    """det(A + B) for rank(B) ≤ 1, computed as det(A) + ⟨cof(A)ᵀ, B⟩."""
    if shape(A) != shape(B) or shape(A)[0] != shape(A)[1]:
        raise ShapeError("det_rank_one_update needs two square matrices of equal size")
    if rank(B, tol=0.0 if _is_exact(B) else 1e-12 * (1 + max((abs(v) for r in B for v in r), default=0))) > 1:
        raise PreconditionError("update matrix must have rank at most one")
    return det(A) + frob(transpose(adjugate(A)), B)


def _is_exact(M: Sequence[Sequence[Scalar]]) -> bool:
    return not any(isinstance(v, float) for r in M for v in r)


def inverse(A: Sequence[Sequence[Scalar]]) -> Matrix:
    """Inverse via Gauss–Jordan; raises PreconditionError if singular."""
    n, c = shape(A)
    if n != c:
        raise ShapeError("inverse of non-square matrix")
    one = A[0][0] ** 0 if not isinstance(A[0][0], float) else 1.0
    aug = [list(A[i]) + identity(n, one)[i] for i in range(n)]
    R, pivots = _rref(aug, tol=0.0 if _is_exact(A) else 1e-14)
    if pivots[:n] != list(range(n)):
        raise PreconditionError("matrix is singular")
    return [row[n:] for row in R]


def hstack(*mats: Sequence[Sequence[Scalar]]) -> Matrix:
    rows = {shape(M)[0] for M in mats}
    if len(rows) != 1:
        raise ShapeError("hstack: row counts differ")
    return [sum((list(M[i]) for M in mats), []) for i in range(rows.pop())]


def vstack(*mats: Sequence[Sequence[Scalar]]) -> Matrix:
    cols = {shape(M)[1] for M in mats}
    if len(cols) != 1:
        raise ShapeError("vstack: column counts differ")
    return [list(r) for M in mats for r in M]


def block(M: Sequence[Sequence[Scalar]], r0: int, r1: int) -> Matrix:
    """Rows r0..r1-1 (used to split stacked (X;Y;Z) matrices)."""
    return [list(r) for r in M[r0:r1]]
