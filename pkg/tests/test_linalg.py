import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affdim import presets
from affdim.linalg import (
    RationalMatrix,
    as_fraction,
    column_submatrix,
    float_rank,
    nu_rank_table,
    project_orthogonal,
    rank,
    spark,
    subspace_canonical,
    svd,
)
from oracles import naive_rank, naive_spark

small_frac = st.fractions(min_value=-20, max_value=20, max_denominator=12)


@st.composite
def rational_matrices(draw, max_rows=5, max_cols=6, deficient=True):
    m = draw(st.integers(1, max_rows))
    n = draw(st.integers(1, max_cols))
    rows = [[draw(small_frac) for _ in range(n)] for _ in range(m)]
    if deficient and m > 1 and draw(st.booleans()):
        a, b = draw(small_frac), draw(small_frac)
        rows[-1] = [a * x + b * y for x, y in zip(rows[0], rows[1 % m])]
    return RationalMatrix.from_rows(rows)


def test_decimal_strings_and_floats_are_exact():
    assert as_fraction(0.3) == Fraction(3, 10)
    assert as_fraction("-1/2") == Fraction(-1, 2)
    assert presets.A_INVERTIBLE.entries[0][2] == Fraction(3, 10)


def test_rank_examples():
    assert rank(presets.A_DEFICIENT) == 2
    assert rank(RationalMatrix.from_rows([[0, 0], [0, 0]])) == 0
    assert rank(presets.A_INVERTIBLE) == 3


def test_column_submatrix():
    sub = column_submatrix(presets.A_DEFICIENT, "110")
    assert sub.entries == tuple(tuple(Fraction(v) for v in r) for r in [[1, 1], [0, 1], [1, 0]])
    empty = column_submatrix(presets.A_DEFICIENT, "000")
    assert empty.cols == 0 and rank(empty) == 0
    assert column_submatrix(presets.A_DEFICIENT, "111") == presets.A_DEFICIENT
    assert column_submatrix(presets.A_DEFICIENT, 0b011) == sub
    with pytest.raises(ValueError):
        column_submatrix(presets.A_DEFICIENT, "11")


def test_spark_examples():
    V = RationalMatrix.from_rows([[1, 1, 1], [1, 2, 3]])
    assert spark(V) == naive_spark([[1, 1, 1], [1, 2, 3]]) == 3
    assert spark(RationalMatrix.from_rows([[1, 0, 2], [3, 0, 1]])) == 1
    assert spark(RationalMatrix.identity(3)) == 4


def test_vandermonde_layout():
    T = RationalMatrix.vandermonde([2, 3, 5], 3)
    assert [list(map(int, r)) for r in T.entries] == [[1, 1, 1], [2, 3, 5], [4, 9, 25]]


def test_subspace_canonical_examples():
    S = subspace_canonical(RationalMatrix.from_columns([[1, 0, 1], [2, 0, 2]], 3))
    assert S.dimension == 1
    assert S.basis == ((1, 0, 1),)
    full = subspace_canonical(presets.A_DEFICIENT)
    for pair in ("110", "011", "101"):
        assert subspace_canonical(column_submatrix(presets.A_DEFICIENT, pair)) == full
    assert subspace_canonical(RationalMatrix(3, 0, ((), (), ()))).dimension == 0


def test_project_orthogonal_examples():
    S = subspace_canonical(RationalMatrix.from_columns([[1, 0, 0]], 3))
    assert project_orthogonal([1, 1, 0], S) == (0, 1, 0)
    assert project_orthogonal([5, 0, 0], S) == (0, 0, 0)
    assert project_orthogonal([0, 2, 3], S) == (0, 2, 3)


def test_svd_examples():
    s = svd(np.eye(3))
    assert np.allclose(s.singular_values, 1)
    s = svd(np.diag([3.0, 0.0]))
    assert s.rank == 1 and s.singular_values[0] == pytest.approx(3)
    s = svd(presets.A_INVERTIBLE)
    det = np.linalg.det(presets.A_INVERTIBLE.to_float())
    assert s.rank == 3
    assert abs(np.prod(s.singular_values) - abs(det)) <= 1e-9
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan]]))


def test_json_roundtrip():
    A = presets.A_INVERTIBLE
    assert RationalMatrix.from_json(A.to_json()) == A
    assert A.to_json()["entries"][0][2] == "3/10"


@given(rational_matrices())
def test_rank_matches_naive_and_float(M):
    rows = [list(r) for r in M.entries]
    assert rank(M) == naive_rank(rows)
    assert float_rank(M) == rank(M)


@given(rational_matrices(max_cols=7))
def test_rank_table_matches_per_pattern_rank(M):
    table = nu_rank_table(M)
    for mask in range(1 << M.cols):
        assert table[mask] == rank(column_submatrix(M, mask))


@given(rational_matrices())
def test_spark_bounded_by_rank_plus_one(M):
    rows = [list(r) for r in M.entries]
    assert spark(M) == naive_spark(rows)
    assert spark(M) <= rank(M) + 1


@given(st.lists(st.fractions(min_value=-10, max_value=10, max_denominator=7), min_size=1, max_size=7, unique=True),
       st.integers(1, 7))
def test_vandermonde_spark_is_rank_plus_one(nodes, m):
    T = RationalMatrix.vandermonde(nodes, m)
    assert spark(T) == rank(T) + 1


@given(rational_matrices(), st.integers(0, 2**32))
def test_canonical_form_invariant_under_invertible_mixing(M, seed):
    rnd = random.Random(seed)
    n = M.cols
    while True:
        G = [[Fraction(rnd.randint(-9, 9), rnd.randint(1, 5)) for _ in range(n)] for _ in range(n)]
        if naive_rank(G) == n:
            break
    mixed = [[sum((M.entries[i][k] * G[k][j] for k in range(n)), Fraction(0)) for j in range(n)]
             for i in range(M.rows)]
    assert subspace_canonical(RationalMatrix.from_rows(mixed)) == subspace_canonical(M)


@given(rational_matrices(), st.data())
def test_projection_idempotent_orthogonal_and_contracting(M, data):
    S = subspace_canonical(M)
    v = [data.draw(small_frac) for _ in range(M.rows)]
    p = project_orthogonal(v, S)
    assert project_orthogonal(p, S) == p
    for b in S.basis:
        assert sum((x * y for x, y in zip(p, b)), Fraction(0)) == 0
    assert sum(x * x for x in p) <= sum(x * x for x in v)


@given(rational_matrices())
def test_svd_reconstruction_and_orthonormality(M):
    A = M.to_float()
    s = svd(M)
    recon = s.left @ np.diag(s.singular_values) @ s.right.T
    norm = np.linalg.norm(A, 2)
    assert np.linalg.norm(recon - A, 2) <= 1e-9 * max(norm, 1e-300) + 1e-12
    k = s.rank
    if k == 0:
        assert not A.any()
        return
    assert np.abs(s.left.T @ s.left - np.eye(k)).max() <= 1e-10
    assert np.abs(s.right.T @ s.right - np.eye(k)).max() <= 1e-10
