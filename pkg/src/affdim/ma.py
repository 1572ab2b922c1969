"""Moving-average processes ``Y_i = sum_j a_j W_{i-j}`` driven by i.i.d.
discrete-continuous noise of continuous weight ``alpha``.

A window of ``m`` outputs is a banded ``m x (m + L)`` linear map of the
noise (``L = l1 + l2``), so its information dimension comes straight from
the rank engine. Concentration bounds are Chernoff-type tails on the
number of continuous noise draws; KL divergences are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .linalg import RationalMatrix, as_fraction, column_submatrix, fraction_str, rank
from .model import SourceSpec, SpecError, _block_rng
from .rid import ENUMERATION_CAP, rid_linear, rid_linear_mc


@dataclass(frozen=True)
class MAConfig:
    taps: tuple[Fraction, ...]
    alpha: Fraction
    m: int = 1
    l1: int = 0

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple(as_fraction(t) for t in self.taps))
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        problems = []
        if not self.taps:
            problems.append("MAConfig: no taps")
        elif self.taps[0] == 0 or self.taps[-1] == 0:
            problems.append("MAConfig: first and last taps must be nonzero")
        if not 0 <= self.alpha <= 1:
            problems.append(f"MAConfig: alpha={self.alpha} outside [0, 1]")
        if self.m < 1:
            problems.append("MAConfig: m must be >= 1")
        if not 0 <= self.l1 <= max(len(self.taps) - 1, 0):
            problems.append(f"MAConfig: l1={self.l1} out of range for {len(self.taps)} taps")
        if problems:
            raise SpecError(problems)

    @property
    def span(self) -> int:
        """``L = l1 + l2``."""
        return len(self.taps) - 1

    @property
    def l2(self) -> int:
        return self.span - self.l1

    def with_m(self, m: int) -> "MAConfig":
        return MAConfig(self.taps, self.alpha, m, self.l1)


def build_ma_matrix(cfg: MAConfig) -> RationalMatrix:
    """Row ``i`` holds the taps starting at column ``i``."""
    cols = cfg.m + cfg.span
    rows = []
    for i in range(cfg.m):
        row = [Fraction(0)] * cols
        row[i:i + len(cfg.taps)] = cfg.taps
        rows.append(row)
    return RationalMatrix.from_rows(rows)


def noise_source(cfg: MAConfig, variance: float = 1.0, n: int | None = None) -> SourceSpec:
    """i.i.d. Bernoulli-Gaussian noise of weight alpha, one coordinate per column."""
    width = cfg.m + cfg.span if n is None else n
    return SourceSpec.bernoulli_gaussian([cfg.alpha] * width, variance)


@dataclass
class BIDRow:
    m: int
    value: Fraction | float
    method: str
    lower: Fraction
    upper: Fraction
    ci: tuple[float, float] | None = None

    def csv_fields(self) -> list[str]:
        v = fraction_str(self.value) if isinstance(self.value, Fraction) else repr(self.value)
        return [str(self.m), v, fraction_str(self.lower), fraction_str(self.upper)]


@dataclass
class BIDReport:
    rows: list[BIDRow]
    limit: Fraction

    def to_json(self) -> dict:
        return {
            "limit": fraction_str(self.limit),
            "rows": [
                {"m": r.m, "per_symbol": fraction_str(r.value) if isinstance(r.value, Fraction) else r.value,
                 "method": r.method, "lower": fraction_str(r.lower), "upper": fraction_str(r.upper),
                 "ci": list(r.ci) if r.ci else None}
                for r in self.rows
            ],
        }


def bid_report(cfg: MAConfig, m_list: Sequence[int], mode: str = "exact",
               samples: int = 100_000, seed: int = 0) -> BIDReport:
    """Per-symbol information dimension ``d(Y^m)/m`` for each window length.

    Bounds ``m alpha / m`` and ``min((m + L) alpha / m, 1)`` are attached;
    exact mode falls back to sampling only when ``m + L`` passes the
    enumeration cap.
    """
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    rows = []
    for m in m_list:
        c = cfg.with_m(m)
        A = build_ma_matrix(c)
        spec = noise_source(c)
        lower = cfg.alpha
        upper = min(Fraction(m + cfg.span) * cfg.alpha / m, Fraction(1))
        if mode == "exact" and m + cfg.span <= ENUMERATION_CAP:
            res = rid_linear(spec, A)
            rows.append(BIDRow(m, res.value / m, "exact", lower, upper))
        else:
            res = rid_linear_mc(spec, A, samples, seed)
            lo, hi = res.ci
            rows.append(BIDRow(m, res.value / m, "monte-carlo", lower, upper, (lo / m, hi / m)))
    return BIDReport(rows, cfg.alpha)


def kl_bernoulli(p, q) -> float:
    """``D(Bern(p) || Bern(q))`` in nats, with ``0 log 0 = 0``."""
    p, q = float(p), float(q)
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    out = 0.0
    for a, b in ((p, q), (1 - p, 1 - q)):
        if a == 0:
            continue
        if b == 0:
            return math.inf
        out += a * math.log(a / b)
    return out


@dataclass(frozen=True)
class ConcentrationBounds:
    above: float | None
    below: float | None
    above_applicable: bool
    below_applicable: bool
    above_ratio: Fraction
    below_ratio: Fraction | None

    def to_json(self) -> dict:
        return {
            "prob_dim_above_k_at_least": self.above,
            "prob_dim_below_k_at_least": self.below,
            "above_applicable": self.above_applicable,
            "below_applicable": self.below_applicable,
            "above_ratio": fraction_str(self.above_ratio),
            "below_ratio": None if self.below_ratio is None else fraction_str(self.below_ratio),
        }


def concentration_bounds(cfg: MAConfig, n: int, k: int) -> ConcentrationBounds:
    """Tail bounds on the dimension of the affine component hit by ``n`` noise draws.

    ``above`` bounds ``P(d > k)`` from below and needs ``(k + L - 1)/n < alpha``;
    ``below`` bounds ``P(d < k)`` from below and needs ``k/(n - L) > alpha``.
    Outside its regime a bound is flagged and left as None.
    """
    L = cfg.span
    if n <= L:
        raise ValueError(f"n={n} must exceed l1+l2={L}")
    a = float(cfg.alpha)
    r_up = Fraction(k + L - 1, n)
    r_lo = Fraction(k, n - L)
    up_ok = 0 <= r_up < cfg.alpha
    lo_ok = r_lo > cfg.alpha and r_lo <= 1
    above = 1 - math.exp(-n * kl_bernoulli(r_up, a)) if up_ok else None
    below = 1 - math.exp(-n * kl_bernoulli(r_lo, a)) if lo_ok else None
    return ConcentrationBounds(above, below, up_ok, lo_ok, r_up, r_lo)


def chernoff_tail_bounds(cfg: MAConfig, n: int, k: int) -> ConcentrationBounds:
    """Counting-argument tails with the exponents derivable from
    :func:`structural_rank_range`.

    ``d <= k`` forces ``|nu| <= k + L`` and ``d >= k`` forces ``|nu| >= k``,
    so ``P(d > k) >= 1 - exp(-n D((k + L)/n || alpha))`` when
    ``(k + L)/n < alpha`` and ``P(d < k) >= 1 - exp(-n D(k/n || alpha))``
    when ``k/n > alpha``. Slightly weaker than :func:`concentration_bounds`
    but never contradicted by sampling.
    """
    L = cfg.span
    if n <= L:
        raise ValueError(f"n={n} must exceed l1+l2={L}")
    a = float(cfg.alpha)
    r_up = Fraction(k + L, n)
    r_lo = Fraction(k, n)
    up_ok = r_up < cfg.alpha
    lo_ok = cfg.alpha < r_lo <= 1
    above = 1 - math.exp(-n * kl_bernoulli(r_up, a)) if up_ok else None
    below = 1 - math.exp(-n * kl_bernoulli(r_lo, a)) if lo_ok else None
    return ConcentrationBounds(above, below, up_ok, lo_ok, r_up, r_lo)


def sample_size_threshold(eps, delta, alpha, l1: int, l2: int) -> tuple[float, float]:
    """Noise lengths beyond which the dimension stays within ``n(alpha -/+ delta)``
    with probability ``1 - eps``: ``(max{2(L-1)/delta, -ln eps / D(alpha - delta/2 || alpha)},
    max{L + 1, -ln eps / D(alpha + delta || alpha)})``."""
    if not 0 < as_fraction(eps) <= 1:
        raise ValueError("eps must lie in (0, 1]")
    fd, fa = as_fraction(delta), as_fraction(alpha)
    if not 0 < fd < min(fa, 1 - fa):
        raise ValueError(f"delta={delta} must lie in (0, min(alpha, 1-alpha))")
    eps, delta, alpha = float(eps), float(delta), float(alpha)
    L = l1 + l2
    log_eps = -math.log(eps)
    first = max(2 * (L - 1) / delta, log_eps / kl_bernoulli(alpha - delta / 2, alpha))
    second = max(L + 1.0, log_eps / kl_bernoulli(alpha + delta, alpha))
    return first, second


def structural_rank_range(weight: int, rows: int, span: int) -> tuple[int, int]:
    """Range of ``rank(A^nu)`` for the banded matrix given ``|nu|``.

    Any ``rows`` consecutive columns are independent (triangular with the
    nonzero end taps on the diagonal), so at most ``span`` selected columns
    can be dependent on the rest.
    """
    return max(0, weight - span), min(rows, weight)


def _float_ranks(A: np.ndarray, nus: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    stack = A[None, :, :] * nus[:, None, :]
    s = np.linalg.svd(stack, compute_uv=False)
    top = s[:, :1]
    return np.sum(s > rtol * np.maximum(top, 1e-300), axis=1)


@dataclass
class EmpiricalTailCheck:
    n: int
    trials: int
    dims: np.ndarray
    rows: list[dict]
    structural_violations: int

    @property
    def violations(self) -> list[dict]:
        return [r for r in self.rows if r["violated"]]

    def to_json(self) -> dict:
        return {"n": self.n, "trials": self.trials, "structural_violations": self.structural_violations,
                "rows": self.rows}


def empirical_tail_check(cfg: MAConfig, n: int, trials: int, seed: int, chunk: int = 4096,
                         bounds=None) -> EmpiricalTailCheck:
    """Sample indicator patterns on ``n`` noise draws and compare the observed
    dimension tails against :func:`concentration_bounds` for every ``k``.

    Ranks are computed in floating point (the matrix is well conditioned
    for nonzero end taps); every sampled rank is also checked against
    :func:`structural_rank_range`. ``bounds`` defaults to
    :func:`concentration_bounds`.
    """
    bounds = bounds or concentration_bounds
    L = cfg.span
    A = build_ma_matrix(cfg.with_m(n - L)).to_float()
    dims = np.empty(trials, dtype=np.int64)
    structural = 0
    a = float(cfg.alpha)
    for start in range(0, trials, chunk):
        rows = min(chunk, trials - start)
        rng = _block_rng(seed, start // chunk)
        nus = (rng.random((rows, n)) < a).astype(float)
        r = _float_ranks(A, nus)
        w = nus.sum(axis=1).astype(np.int64)
        lo = np.maximum(0, w - L)
        hi = np.minimum(n - L, w)
        structural += int(np.sum((r < lo) | (r > hi)))
        dims[start:start + rows] = r
    out = []
    for k in range(0, n - L + 1):
        b = bounds(cfg, n, k)
        p_above = float(np.mean(dims > k))
        p_below = float(np.mean(dims < k))
        violated = (b.above_applicable and p_above < b.above) or (b.below_applicable and p_below < b.below)
        out.append({"k": k, "p_above": p_above, "bound_above": b.above,
                    "p_below": p_below, "bound_below": b.below, "violated": bool(violated)})
    return EmpiricalTailCheck(n, trials, dims, out, structural)


def exact_rank(cfg: MAConfig, n: int, nu: Sequence[int]) -> int:
    """Exact rank of the banded matrix on ``n`` noise draws restricted to the
    columns selected by the 0/1 pattern (or int mask) ``nu``."""
    A = build_ma_matrix(cfg.with_m(n - cfg.span))
    return rank(column_submatrix(A, nu))


def parse_taps(text: str) -> tuple[Fraction, ...]:
    return tuple(as_fraction(t.strip()) for t in text.split(",") if t.strip())


def parse_m_range(text: str) -> list[int]:
    """``"1..12"`` or ``"1,2,5"``."""
    if ".." in text:
        lo, hi = (int(t) for t in text.split(".."))
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t.strip()]


__all__ = [
    "MAConfig", "BIDRow", "BIDReport", "ConcentrationBounds", "EmpiricalTailCheck",
    "build_ma_matrix", "noise_source", "bid_report", "kl_bernoulli", "concentration_bounds",
    "chernoff_tail_bounds", "sample_size_threshold", "structural_rank_range", "empirical_tail_check", "exact_rank",
    "parse_taps", "parse_m_range",
]
