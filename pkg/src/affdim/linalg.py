"""Exact rational linear algebra plus the few float decompositions we need.

Rank, spark and subspace identity are computed over the rationals so that
merging affine subsets never depends on a tolerance. Floats only show up in
:func:`svd` and :func:`float_rank`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

#: Relative singular-value threshold used by :func:`float_rank`.
FLOAT_RANK_RTOL = 1e-9


def as_fraction(x) -> Fraction:
    """Parse ints, ``"p/q"``/decimal strings, Fractions and floats exactly.

    Floats go through their shortest repr, so ``0.3`` becomes ``3/10``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational")


def fraction_str(x: Fraction) -> str:
    """``"p/q"`` form (``"p"`` for integers)."""
    return str(Fraction(x))


@dataclass(frozen=True)
class RationalMatrix:
    """Dense m x n matrix of exact rationals, stored row-major."""

    rows: int
    cols: int
    entries: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError("RationalMatrix needs at least one row")
        if self.cols < 0:
            raise ValueError("negative column count")
        if len(self.entries) != self.rows or any(len(r) != self.cols for r in self.entries):
            raise ValueError("entries do not match the declared shape")

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable]) -> "RationalMatrix":
        data = tuple(tuple(as_fraction(v) for v in row) for row in rows)
        if not data:
            raise ValueError("RationalMatrix needs at least one row")
        return cls(len(data), len(data[0]), data)

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence], rows: int) -> "RationalMatrix":
        cols = [tuple(as_fraction(v) for v in c) for c in columns]
        if any(len(c) != rows for c in cols):
            raise ValueError("column length mismatch")
        data = tuple(tuple(c[i] for c in cols) for i in range(rows))
        return cls(rows, len(cols), data)

    @classmethod
    def identity(cls, n: int) -> "RationalMatrix":
        return cls.from_rows([[int(i == j) for j in range(n)] for i in range(n)])

    @classmethod
    def vandermonde(cls, nodes: Sequence, rows: int) -> "RationalMatrix":
        """Rows are the powers 0..rows-1 of the nodes: ``T[k, j] = x_j**k``."""
        xs = [as_fraction(x) for x in nodes]
        return cls.from_rows([[x**k for x in xs] for k in range(rows)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def column(self, j: int) -> tuple[Fraction, ...]:
        return tuple(row[j] for row in self.entries)

    def columns(self) -> list[tuple[Fraction, ...]]:
        return [self.column(j) for j in range(self.cols)]

    def matvec(self, x: Sequence) -> tuple[Fraction, ...]:
        xs = [as_fraction(v) for v in x]
        return tuple(sum((a * b for a, b in zip(row, xs)), Fraction(0)) for row in self.entries)

    def to_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.entries], dtype=float).reshape(
            self.rows, self.cols
        )

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "entries": [[fraction_str(v) for v in row] for row in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RationalMatrix":
        m = cls.from_rows(obj["entries"])
        if "rows" in obj and obj["rows"] != m.rows:
            raise ValueError(f"RationalMatrix: declared rows={obj['rows']} but got {m.rows}")
        if "cols" in obj and obj["cols"] != m.cols:
            raise ValueError(f"RationalMatrix: declared cols={obj['cols']} but got {m.cols}")
        return m


# ---------------------------------------------------------------------------
# integer echelon machinery (fraction-free)
# ---------------------------------------------------------------------------


def _integer_vector(vec: Sequence[Fraction]) -> list[int]:
    """Scale a rational vector to a primitive integer vector with the same span."""
    den = 1
    for v in vec:
        den = den * v.denominator // math.gcd(den, v.denominator)
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    if g > 1:
        ints = [v // g for v in ints]
    return ints


def _reduce(vec: list[int], basis: list[tuple[int, list[int]]]) -> tuple[int, list[int]] | None:
    """Eliminate the basis pivots from ``vec``.

    Every basis vector is zero at the pivots of the vectors inserted before
    it, so a single pass in insertion order suffices. Returns the new
    ``(pivot, vector)`` pair or None when ``vec`` is already in the span.
    """
    v = vec
    for p, b in basis:
        c = v[p]
        if c:
            bp = b[p]
            v = [bp * x - c * y for x, y in zip(v, b)]
    g = 0
    for x in v:
        g = math.gcd(g, x)
    if g == 0:
        return None
    if g > 1:
        v = [x // g for x in v]
    pivot = next(i for i, x in enumerate(v) if x)
    return pivot, v


def rank(M: RationalMatrix) -> int:
    """Exact rank by fraction-free elimination over the integers."""
    basis: list[tuple[int, list[int]]] = []
    for col in M.columns():
        red = _reduce(_integer_vector(col), basis)
        if red is not None:
            basis.append(red)
            if len(basis) == M.rows:
                break
    return len(basis)


def _mask_bits(mask: int, n: int) -> list[int]:
    return [i for i in range(n) if mask >> i & 1]


def column_submatrix(M: RationalMatrix, nu) -> RationalMatrix:
    """Columns ``i`` with ``nu[i] == 1``, in their original order.

    ``nu`` is a bit string (``"110"``), a sequence of 0/1, or an int mask
    whose bit ``i`` selects column ``i``. The empty pattern yields an
    m x 0 matrix, whose rank is 0.
    """
    if isinstance(nu, int):
        if nu < 0 or nu >> M.cols:
            raise ValueError(f"mask {nu} does not fit {M.cols} columns")
        keep = _mask_bits(nu, M.cols)
    else:
        bits = [int(c) for c in nu]
        if len(bits) != M.cols:
            raise ValueError(f"pattern length {len(bits)} != {M.cols} columns")
        keep = [i for i, b in enumerate(bits) if b]
    data = tuple(tuple(row[j] for j in keep) for row in M.entries)
    return RationalMatrix(M.rows, len(keep), data)


def nu_rank_table(M: RationalMatrix) -> np.ndarray:
    """``table[mask] = rank(A^nu)`` for all ``2**n`` column patterns.

    Depth-first over columns with an incremental echelon basis, so every
    tree node costs one vector reduction. Once the basis reaches rank(M) the
    whole subtree is filled in one strided assignment.
    """
    n = M.cols
    full = rank(M)
    cols = [_integer_vector(c) for c in M.columns()]
    out = np.empty(1 << n, dtype=np.int16)

    def visit(i: int, mask: int, basis: list) -> None:
        r = len(basis)
        if r == full or i == n:
            out[mask :: 1 << i] = r
            return
        visit(i + 1, mask, basis)
        red = _reduce(cols[i], basis)
        visit(i + 1, mask | (1 << i), basis + [red] if red is not None else basis)

    visit(0, 0, [])
    return out


def spark(M: RationalMatrix) -> int:
    """Smallest number of linearly dependent columns; ``n + 1`` if none.

    Enumerates subsets by increasing size and stops at the first dependent
    one. Any ``rank(M) + 1`` columns are dependent, so the search never goes
    beyond that size. Cost is ``sum_k C(n, k)`` small ranks, fine for
    n <= ~24.
    """
    cols = [_integer_vector(c) for c in M.columns()]
    r = rank(M)
    for k in range(1, min(M.cols, r + 1) + 1):
        for subset in itertools.combinations(range(M.cols), k):
            basis: list = []
            for j in subset:
                red = _reduce(cols[j], basis)
                if red is None:
                    return k
                basis.append(red)
    return M.cols + 1


# ---------------------------------------------------------------------------
# subspaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubspaceCanonical:
    """Column span of a matrix, as the reduced row echelon form of a basis.

    Two matrices have the same column span iff their canonical forms compare
    equal, which makes this usable as a dictionary key.
    """

    ambient: int
    basis: tuple[tuple[Fraction, ...], ...]
    pivots: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def to_json(self) -> list[list[str]]:
        return [[fraction_str(v) for v in row] for row in self.basis]


def rref(rows: Sequence[Sequence[Fraction]], width: int) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form; zero rows are dropped."""
    mat = [[as_fraction(v) for v in r] for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(width):
        piv = next((i for i in range(r, len(mat)) if mat[i][c] != 0), None)
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        lead = mat[r][c]
        mat[r] = [v / lead for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    return mat[:r], pivots


def subspace_canonical(M: RationalMatrix) -> SubspaceCanonical:
    basis, pivots = rref(M.columns(), M.rows)
    return SubspaceCanonical(M.rows, tuple(tuple(b) for b in basis), tuple(pivots))


def _solve(G: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    """Solve a nonsingular square system exactly (Gauss-Jordan)."""
    k = len(G)
    aug = [list(G[i]) + [rhs[i]] for i in range(k)]
    red, pivots = rref(aug, k + 1)
    if pivots != list(range(k)):
        raise ArithmeticError("singular system")
    return [row[k] for row in red]


def project_orthogonal(shift: Sequence, S: SubspaceCanonical) -> tuple[Fraction, ...]:
    """Exact projection of ``shift`` onto the orthogonal complement of ``S``."""
    s = [as_fraction(v) for v in shift]
    if len(s) != S.ambient:
        raise ValueError(f"shift has length {len(s)}, subspace lives in R^{S.ambient}")
    if S.dimension == 0:
        return tuple(s)
    B = S.basis
    gram = [[sum((a * b for a, b in zip(bi, bj)), Fraction(0)) for bj in B] for bi in B]
    rhs = [sum((a * b for a, b in zip(bi, s)), Fraction(0)) for bi in B]
    coef = _solve(gram, rhs)
    out = list(s)
    for c, b in zip(coef, B):
        if c:
            out = [o - c * v for o, v in zip(out, b)]
    return tuple(out)


def orthonormal_basis(S: SubspaceCanonical) -> np.ndarray:
    """Float m x r matrix with orthonormal columns spanning ``S``."""
    if S.dimension == 0:
        return np.zeros((S.ambient, 0))
    B = np.array([[float(v) for v in row] for row in S.basis]).T
    q, _ = np.linalg.qr(B)
    return q


# ---------------------------------------------------------------------------
# float decompositions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SVDResult:
    """Compact SVD: ``A ~= left @ diag(singular_values) @ right.T``."""

    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)


def svd(M, rtol: float = FLOAT_RANK_RTOL) -> SVDResult:
    """SVD keeping the singular values above ``rtol * sigma_1``."""
    A = M.to_float() if isinstance(M, RationalMatrix) else np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ValueError("svd expects a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("svd: matrix has non-finite entries")
    if A.size == 0:
        return SVDResult(np.zeros(0), np.zeros((A.shape[0], 0)), np.zeros((A.shape[1], 0)))
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rtol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    return SVDResult(s[keep], u[:, keep], vt[keep].T)


def float_rank(M, rtol: float = FLOAT_RANK_RTOL) -> int:
    return svd(M, rtol).rank
