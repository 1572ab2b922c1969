import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from affdim import presets
from affdim.decompose import decompose
from affdim.linalg import RationalMatrix, rank
from affdim.model import DiscreteSpec, Gaussian, NuJointPMF, SourceSpec, Uniform
from affdim.rid import (
    EnumerationCapError,
    check_spark_condition,
    lipschitz_upper_bound,
    rid_linear,
    rid_linear_mc,
    rid_of_decomposition,
    rid_sensitivity,
)
from oracles import naive_expected_rank, product_nu_probs

H = Fraction(1, 2)


def test_worked_values():
    assert rid_linear(presets.bg_triple(), presets.A_INVERTIBLE).value == Fraction(3, 2)
    assert rid_linear(presets.bg_triple(), presets.A_DEFICIENT).value == Fraction(11, 8)
    for name, want in presets.EXPECTED_ROW_RID.items():
        assert rid_linear(presets.table_source(name), presets.A_ROW).value == want


def test_row_values_match_brute_force_oracle():
    for name, table in presets.NU_TABLES.items():
        probs = {tuple(int(c) for c in k): Fraction(v) for k, v in table.items()}
        assert naive_expected_rank([[1, 2]], probs) == presets.EXPECTED_ROW_RID[name]


def test_all_continuous_gives_rank():
    A = presets.A_DEFICIENT
    assert rid_linear(SourceSpec.bernoulli_gaussian([1, 1, 1]), A).value == rank(A)


def test_full_column_rank_gives_sum_of_alphas():
    A = RationalMatrix.from_rows([[1, 0], [2, 1], [0, 3]])
    spec = SourceSpec.bernoulli_gaussian(["1/3", "3/4"])
    assert rid_linear(spec, A).value == Fraction(1, 3) + Fraction(3, 4)


def test_enumeration_cap():
    spec = SourceSpec.bernoulli_gaussian([H] * 21)
    A = RationalMatrix.identity(21)
    with pytest.raises(EnumerationCapError, match="rid_linear_mc"):
        rid_linear(spec, A)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        rid_linear(presets.bg_scalar(), presets.A_DEFICIENT)


def test_mc_examples():
    res = rid_linear_mc(presets.bg_triple(), presets.A_DEFICIENT, 10**6, 5)
    assert abs(res.value - 1.375) <= 0.003
    lo, hi = res.ci
    assert lo <= 1.375 <= hi
    res = rid_linear_mc(SourceSpec.bernoulli_gaussian([1, 1, 1]), presets.A_DEFICIENT, 1000, 1)
    assert res.value == 2 and res.ci[0] == res.ci[1] == 2
    res = rid_linear_mc(SourceSpec.bernoulli_gaussian([0, 0, 0]), presets.A_DEFICIENT, 1000, 1)
    assert res.value == 0
    with pytest.raises(ValueError):
        rid_linear_mc(presets.bg_triple(), presets.A_DEFICIENT, 999, 1)


def test_mc_interval_coverage():
    hits = 0
    for seed in range(100):
        lo, hi = rid_linear_mc(presets.bg_triple(), presets.A_DEFICIENT, 2000, seed).ci
        hits += lo <= 1.375 <= hi
    assert hits >= 93


def test_lipschitz_examples():
    assert lipschitz_upper_bound(presets.bg_triple(), 3) == Fraction(3, 2)
    assert lipschitz_upper_bound(presets.table_source("Q"), 1) == Fraction(41, 50)
    assert lipschitz_upper_bound(SourceSpec.bernoulli_gaussian([1] * 4), 2) == 2


def test_sensitivity_examples():
    A = RationalMatrix.from_rows([[1, 0, 0], [0, 0, 1]])
    assert rid_sensitivity(presets.bg_triple(), A, 1) == 0
    assert rid_sensitivity(presets.bg_triple(), RationalMatrix.identity(3), 0) == 1
    spec = presets.bg_triple()
    fd = rid_linear(spec.with_alpha(0, 1), presets.A_DEFICIENT).value - rid_linear(
        spec.with_alpha(0, 0), presets.A_DEFICIENT).value
    assert rid_sensitivity(spec, presets.A_DEFICIENT, 0) == fd == Fraction(3, 4)
    with pytest.raises(ValueError, match="independent form"):
        rid_sensitivity(presets.table_source("Q"), presets.A_ROW, 0)


def test_rid_of_decomposition_examples():
    D = decompose(presets.bg_triple(), presets.A_DEFICIENT)
    assert rid_of_decomposition(D) == Fraction(11, 8)
    assert rid_of_decomposition(decompose(SourceSpec.bernoulli_gaussian([1, 1]), RationalMatrix.identity(2))) == 2
    assert rid_of_decomposition(decompose(SourceSpec.bernoulli_gaussian([0, 0]), RationalMatrix.identity(2))) == 0


def test_spark_condition_examples():
    assert check_spark_condition(RationalMatrix.from_rows([[1, 1, 1], [1, 2, 3]]))
    assert not check_spark_condition(RationalMatrix.from_rows([[1, 1, 0], [2, 2, 1], [0, 0, 5]]))
    assert check_spark_condition(RationalMatrix.identity(3))


alpha_st = st.sampled_from([Fraction(k, 8) for k in range(9)])
entry_st = st.integers(-4, 4)


@st.composite
def spec_and_matrix(draw):
    n = draw(st.integers(1, 5))
    m = draw(st.integers(1, 4))
    rows = [[draw(entry_st) for _ in range(n)] for _ in range(m)]
    alphas = [draw(alpha_st) for _ in range(n)]
    return SourceSpec.bernoulli_gaussian(alphas), RationalMatrix.from_rows(rows)


@given(spec_and_matrix())
def test_matches_brute_force(sa):
    spec, A = sa
    want = naive_expected_rank([list(r) for r in A.entries], product_nu_probs(spec.nu_model.alphas))
    assert rid_linear(spec, A).value == want


@given(spec_and_matrix(), st.integers(0, 4))
def test_affine_and_nondecreasing_in_each_alpha(sa, i):
    spec, A = sa
    i %= spec.n
    vals = [rid_linear(spec.with_alpha(i, a), A).value for a in (0, H, 1)]
    assert vals[0] <= vals[1] <= vals[2]
    assert vals[1] - vals[0] == vals[2] - vals[1]
    assert rid_sensitivity(spec, A, i) == vals[2] - vals[0] >= 0


@given(spec_and_matrix())
def test_below_lipschitz_bound(sa):
    spec, A = sa
    d = rid_linear(spec, A).value
    bound = lipschitz_upper_bound(spec, A.rows)
    assert d <= bound
    if check_spark_condition(A) and rank(A) == min(A.rows, A.cols):
        assert d == bound


@given(spec_and_matrix(), st.integers(0, 2**32))
def test_invariant_to_atoms_and_continuous_laws(sa, seed):
    spec, A = sa
    rnd = random.Random(seed)
    atoms = [DiscreteSpec.of([(rnd.randint(-3, 3), "1/2"), (Fraction(7, 2), "1/2")]) for _ in range(spec.n)]
    cont = tuple(Gaussian(rnd.uniform(-1, 1), rnd.uniform(0.1, 4)) if rnd.random() < 0.5
                 else Uniform(-1, rnd.uniform(0, 2)) for _ in range(spec.n))
    other = SourceSpec(spec.n, cont, NuJointPMF.independent(spec.nu_model.alphas, atoms))
    assert rid_linear(other, A).value == rid_linear(spec, A).value


@given(spec_and_matrix())
def test_equals_decomposition(sa):
    spec, A = sa
    assert rid_of_decomposition(decompose(spec, A)) == rid_linear(spec, A).value


@given(st.integers(1, 6), st.integers(1, 8), st.sets(st.fractions(-5, 5, max_denominator=4), min_size=8, max_size=8))
def test_vandermonde_curve(m, n, nodes):
    T = RationalMatrix.vandermonde(sorted(nodes)[:n], m)
    spec = SourceSpec.bernoulli_gaussian([H] * n)
    d = rid_linear(spec, T).value
    assert d == lipschitz_upper_bound(spec, m)
    if n <= m:
        assert d == Fraction(n, 2)
