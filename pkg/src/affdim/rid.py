"""Information dimension of ``Y = A X`` for discrete-continuous sources.

The exact path averages ``rank(A^nu)`` over the indicator law, where
``A^nu`` keeps the columns whose coordinate is continuous. The Monte Carlo
path samples the indicators instead, for sources too wide to enumerate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .linalg import RationalMatrix, column_submatrix, nu_rank_table, rank, spark
from .model import SourceSpec, ensure_valid, product_weights, sample

#: Widest source enumerated exactly (2**20 patterns).
ENUMERATION_CAP = 20


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class RIDResult:
    value: Fraction | float
    method: str
    patterns: int
    ci: tuple[float, float] | None = None

    def to_json(self) -> dict:
        if isinstance(self.value, Fraction):
            value = str(self.value)
        else:
            value = self.value
        return {"value": value, "method": self.method, "ci": list(self.ci) if self.ci else None,
                "patterns": self.patterns}


def _check_shape(spec: SourceSpec, A: RationalMatrix) -> None:
    if A.cols != spec.n:
        raise ValueError(f"matrix has {A.cols} columns but the source has n={spec.n}")


def expected_over_nu(spec: SourceSpec, values: np.ndarray) -> Fraction:
    """Exact ``E[values[nu]]`` for an integer array indexed by pattern mask."""
    nm = spec.nu_model
    if nm.is_product:
        w = product_weights(nm.alphas)
        return sum((p * int(v) for p, v in zip(w, values.tolist()) if p and v), Fraction(0))
    return sum((p * int(values[mask]) for mask, p in nm.nu_pmf().items()), Fraction(0))


def rid_linear(spec: SourceSpec, A: RationalMatrix, cap: int = ENUMERATION_CAP) -> RIDResult:
    """Exact ``E_nu[rank(A^nu)]`` as a rational."""
    ensure_valid(spec)
    _check_shape(spec, A)
    if spec.n > cap:
        raise EnumerationCapError(
            f"n={spec.n} exceeds the exact enumeration cap {cap}; use rid_linear_mc"
        )
    ranks = nu_rank_table(A)
    value = expected_over_nu(spec, ranks)
    return RIDResult(value, "exact", len(spec.nu_model.nu_pmf()) if not spec.nu_model.is_product else 1 << spec.n)


def _pattern_ranks(A: RationalMatrix, nu: np.ndarray) -> np.ndarray:
    """rank(A^nu) for each sampled row of indicator bits, one rank per distinct row."""
    packed = np.packbits(nu.astype(np.uint8), axis=1, bitorder="little")
    uniq, inverse = np.unique(packed, axis=0, return_inverse=True)
    n = A.cols
    ranks = np.empty(len(uniq), dtype=np.int64)
    for k, row in enumerate(uniq):
        bits = np.unpackbits(row, bitorder="little")[:n]
        mask = sum(1 << i for i in np.flatnonzero(bits).tolist())
        ranks[k] = rank(column_submatrix(A, mask))
    return ranks[inverse.reshape(-1)]


def rid_linear_mc(spec: SourceSpec, A: RationalMatrix, samples: int, seed: int) -> RIDResult:
    """Sampled ``E_nu[rank(A^nu)]`` with a normal-approximation 95% CI."""
    if samples < 1000:
        raise ValueError("rid_linear_mc needs at least 1000 samples")
    _check_shape(spec, A)
    batch = sample(spec, samples, seed)
    r = _pattern_ranks(A, batch.nu_draws).astype(float)
    mean = float(r.mean())
    half = 1.959963984540054 * float(r.std(ddof=1)) / math.sqrt(samples)
    return RIDResult(mean, "monte-carlo", samples, (mean - half, mean + half))


def lipschitz_upper_bound(spec: SourceSpec, m: int) -> Fraction:
    """``E[min(|nu|, m)]``: the largest information dimension any Lipschitz
    map into R^m can produce from this source."""
    ensure_valid(spec)
    nm = spec.nu_model
    if nm.is_product:
        # distribution of |nu| by dynamic programming (Poisson-binomial)
        dist = [Fraction(1)]
        for a in nm.alphas:
            nxt = [Fraction(0)] * (len(dist) + 1)
            for k, p in enumerate(dist):
                nxt[k] += p * (1 - a)
                nxt[k + 1] += p * a
            dist = nxt
        return sum((p * min(k, m) for k, p in enumerate(dist)), Fraction(0))
    return sum((p * min(bin(mask).count("1"), m) for mask, p in nm.nu_pmf().items()), Fraction(0))


def rid_sensitivity(spec: SourceSpec, A: RationalMatrix, i: int) -> Fraction:
    """Exact partial derivative of the information dimension in ``alpha_i``.

    Equals the expected rank gain from switching column ``i`` on, the other
    indicators drawn from their product law; never negative.
    """
    ensure_valid(spec)
    _check_shape(spec, A)
    nm = spec.nu_model
    if not nm.is_product:
        raise ValueError("sensitivity defined for independent form")
    if not 0 <= i < spec.n:
        raise IndexError(f"coordinate {i} out of range")
    ranks = nu_rank_table(A).astype(np.int64)
    bit = 1 << i
    others = list(nm.alphas)
    others[i] = Fraction(0)
    w = product_weights(others)
    gain = ranks[np.arange(1 << spec.n) | bit] - ranks
    return sum((p * int(g) for p, g in zip(w, gain.tolist()) if p and g), Fraction(0))


def rid_of_decomposition(D) -> Fraction:
    """``sum_i p_i d_i`` over the affine components."""
    return sum((c.prob * c.dim for c in D.components), Fraction(0))


def check_spark_condition(A: RationalMatrix) -> bool:
    """True iff spark(A) == rank(A) + 1."""
    return spark(A) == rank(A) + 1
