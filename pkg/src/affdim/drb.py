"""Dimensional rate bias: closed forms and a rate-distortion oracle.

All entropies are in bits. The bias ``b`` is the constant in
``R(D) ~ -(d/2) log2(2 pi e D) + b`` as the distortion vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.signal import convolve

from .decompose import Decomposition, decompose
from .linalg import RationalMatrix, rank, svd
from .model import Gaussian, SourceSpec, Uniform, ensure_valid
from .rid import rid_linear


class DegenerateSourceError(ValueError):
    pass


class ConvergenceError(ArithmeticError):
    pass


@dataclass
class DRBResult:
    drb_bits: float
    rid: Fraction
    formula: str
    flags: dict[str, bool] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "drb_bits": self.drb_bits,
            "rid": str(self.rid),
            "formula": self.formula,
            "flags": dict(self.flags),
            "warnings": list(self.warnings),
        }


def _dim_term(d: Fraction) -> float:
    return 0.0 if d in (0, 1) else float(d) / 2 * math.log2(float(d))


def drb_of_decomposition(D: Decomposition) -> DRBResult:
    """``H(V) + sum_i p_i h(C_i) + (d/2) log2 d`` with ``d = sum_i p_i d_i``.

    Point components have no differential entropy term; they are skipped in
    the sum and flagged, as are components whose entropy is unknown.
    """
    d = D.rid
    if d == 0:
        raise DegenerateSourceError("degenerate: purely discrete")
    flags = {"point_component": False, "entropy_unavailable": False, "entropy_finite": True}
    warnings = []
    acc = 0.0
    for c in D.components:
        if c.dim == 0:
            if c.prob > 0:
                flags["point_component"] = True
            continue
        if c.diff_entropy_bits is None:
            flags["entropy_unavailable"] = True
            continue
        if not math.isfinite(c.diff_entropy_bits):
            flags["entropy_finite"] = False
        acc += float(c.prob) * c.diff_entropy_bits
    if flags["point_component"]:
        warnings.append("point-mass components present: outside the h(C_i) > -inf hypothesis, excluded from the sum")
    if flags["entropy_unavailable"]:
        warnings.append("some component entropies unavailable; their terms are missing from the value")
    value = D.selector_entropy_bits + acc + _dim_term(d)
    return DRBResult(value, d, "decomposition", flags, warnings)


def _second_moments_finite(spec: SourceSpec) -> bool:
    return all(isinstance(c, (Gaussian, Uniform)) for c in spec.continuous)


def drb_full_column_rank(spec: SourceSpec, A: RationalMatrix) -> DRBResult:
    """Closed form for injective ``A``: every (pattern, atoms) cell is its own component."""
    ensure_valid(spec)
    if rank(A) != spec.n:
        raise ValueError("full-column-rank formula needs rank(A) == n")
    Af = A.to_float()
    d = sum(spec.nu_model.marginal_alpha(), Fraction(0))
    if d == 0:
        raise DegenerateSourceError("degenerate: purely discrete")
    hc = [c.entropy_bits() for c in spec.continuous]
    expect = 0.0
    point = False
    for mask, p in spec.nu_model.nu_pmf().items():
        on = [i for i in range(spec.n) if mask >> i & 1]
        if not on:
            point = True
            continue
        B = Af[:, on]
        _, logdet = np.linalg.slogdet(B.T @ B)
        expect += float(p) * (0.5 * logdet / math.log(2) + sum(hc[i] for i in on))
    value = spec.nu_model.entropy_bits() + expect + _dim_term(d)
    flags = {
        "point_component": point,
        "entropy_unavailable": False,
        "entropy_finite": True,
        "finite_second_moments": _second_moments_finite(spec),
    }
    warnings = ["point-mass components present: outside the h(C_i) > -inf hypothesis"] if point else []
    return DRBResult(value, d, "full-column-rank", flags, warnings)


def drb_linear(spec: SourceSpec, A: RationalMatrix, path: str = "auto") -> DRBResult:
    """DRB of ``A X``.

    ``path="auto"`` uses the injective closed form when ``rank(A) == n`` and
    the decomposition otherwise; either route can be forced.
    """
    ensure_valid(spec)
    if path not in ("auto", "full-column-rank", "decomposition"):
        raise ValueError(f"unknown path {path!r}")
    if path == "full-column-rank" or (path == "auto" and rank(A) == spec.n):
        return drb_full_column_rank(spec, A)
    D = decompose(spec, A, with_entropy=True)
    res = drb_of_decomposition(D)
    if res.rid != rid_linear(spec, A).value:
        raise ArithmeticError("decomposition and rank formula disagree on the information dimension")
    res.flags["finite_second_moments"] = _second_moments_finite(spec)
    return res


def gaussian_projected_entropy_bits(A: RationalMatrix | np.ndarray, cov: np.ndarray) -> float:
    """h(V_k^T X) for Gaussian X with covariance ``cov``, V_k the top right singular vectors of A."""
    s = svd(A)
    V = s.right
    C = V.T @ np.asarray(cov, dtype=float) @ V
    _, logdet = np.linalg.slogdet(C)
    k = s.rank
    return 0.5 * (k * math.log(2 * math.pi * math.e) + logdet) / math.log(2)


def drb_abs_continuous(A: RationalMatrix | np.ndarray, hX_bits: float) -> DRBResult:
    """``sum_{i<=k} log2 sigma_i + h(V_k^T X) + (k/2) log2 k`` for absolutely continuous X.

    ``hX_bits`` is the entropy of the projection onto the top-k right
    singular vectors, supplied by the caller.
    """
    s = svd(A)
    k = s.rank
    if k == 0:
        raise DegenerateSourceError("zero matrix")
    value = float(np.sum(np.log2(s.singular_values))) + hX_bits + _dim_term(Fraction(k))
    flags = {"entropy_finite": math.isfinite(hX_bits)}
    return DRBResult(value, Fraction(k), "absolutely-continuous", flags, [])


# ---------------------------------------------------------------------------
# numerical rate-distortion oracle (scalar sources)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RDFCurvePoint:
    distortion: float
    rate_bits: float
    grid_step: float
    grid_lo: float
    grid_points: int
    slope: float = 0.0
    iterations: int = 0
    lower_bound_bits: float = 0.0

    def to_json(self) -> dict:
        return {
            "D": self.distortion,
            "rate_bits": self.rate_bits,
            "lower_bound_bits": self.lower_bound_bits,
            "grid_step": self.grid_step,
            "grid_lo": self.grid_lo,
            "grid_points": self.grid_points,
            "slope": self.slope,
            "iterations": self.iterations,
        }


def _rational_gcd(values: Sequence[Fraction]) -> Fraction:
    g = Fraction(0)
    for v in values:
        v = abs(v)
        if g == 0:
            g = v
        elif v:
            g = Fraction(math.gcd(g.numerator * v.denominator, v.numerator * g.denominator), g.denominator * v.denominator)
    return g


def discretize_scalar(spec: SourceSpec, D: float, step: float | None = None, width: float = 6.0):
    """Grid and pmf for a one-dimensional source.

    The grid is uniform, passes through every atom, spans ``width`` standard
    deviations of the continuous part (or its support) and has step at most
    ``sqrt(D)/4`` unless ``step`` is given.
    """
    if spec.n != 1:
        raise ValueError("rdf oracle handles one-dimensional sources only")
    nm = spec.nu_model
    alpha = nm.marginal_alpha()[0]
    atoms: dict[Fraction, Fraction] = {}
    for cell in nm.support():
        if not cell.nu & 1:
            v = cell.xd[0][1]
            atoms[v] = atoms.get(v, Fraction(0)) + cell.prob
    hmax = step if step is not None else math.sqrt(D) / 4
    cont = spec.continuous[0]
    lo, hi = cont.support(width)
    if atoms:
        vals = sorted(atoms)
        g = _rational_gcd([v - vals[0] for v in vals[1:]])
        h = float(g) / math.ceil(float(g) / hmax) if g else hmax
        origin = float(vals[0])
        lo, hi = min(lo, float(vals[0])), max(hi, float(vals[-1]))
    else:
        h, origin = hmax, float(lo)
    k_lo = math.floor((lo - origin) / h)
    k_hi = math.ceil((hi - origin) / h)
    x = origin + np.arange(k_lo, k_hi + 1) * h
    edges = np.concatenate([x - h / 2, [x[-1] + h / 2]])
    p = float(alpha) * np.diff(cont.cdf(edges))
    for v, pv in atoms.items():
        p[int(round((float(v) - origin) / h)) - k_lo] += float(pv)
    p = np.clip(p, 0.0, None)
    return x, p / p.sum(), h


def _blahut_arimoto(p, h, beta, q0=None, tol=1e-6, max_iter=10_000):
    """Fixed-slope alternating minimization on a uniform grid.

    The squared-error kernel is Toeplitz and negligible past
    ``beta t^2 > 60``, so both updates are banded convolutions.
    Returns rate (bits), distortion, output law, iterations, lower bound.
    """
    w = int(math.ceil(math.sqrt(60.0 / beta) / h))
    t = np.arange(-w, w + 1) * h
    K = np.exp(-beta * t * t)
    KD = K * t * t
    q = (p if q0 is None else q0).copy()
    support = p > 0
    prev = None
    for it in range(1, max_iter + 1):
        Z = np.maximum(convolve(q, K, mode="same"), 1e-300)
        r = p / Z
        dist = float(np.sum(r * convolve(q, KD, mode="same")))
        lagr = -float(np.sum(p[support] * np.log(Z[support])))
        rate = (lagr - beta * dist) / math.log(2)
        c = convolve(r, K, mode="same")
        q = q * c
        q /= q.sum()
        if prev is not None and abs(rate - prev) < tol:
            lower = (lagr - beta * dist - math.log(float(c.max()))) / math.log(2)
            return max(rate, 0.0), dist, q, it, lower
        prev = rate
    raise ConvergenceError(f"Blahut-Arimoto did not converge in {max_iter} iterations")


def rdf_oracle_scalar(spec: SourceSpec, D: float, step: float | None = None,
                      tol: float = 1e-6, max_iter: int = 10_000) -> RDFCurvePoint:
    """Quadratic rate-distortion function of a scalar source at distortion ``D``."""
    ensure_valid(spec)
    if D <= 0:
        raise ValueError("distortion must be positive")
    x, p, h = discretize_scalar(spec, D, step)
    mean = float(p @ x)
    dmax = float(p @ (x - mean) ** 2)
    if D >= dmax:
        return RDFCurvePoint(D, 0.0, h, float(x[0]), len(x))
    state: dict = {"q": None}

    def gap(log_beta: float) -> float:
        rate, dist, q, it, lower = _blahut_arimoto(p, h, math.exp(log_beta), state["q"], tol, max_iter)
        state.update(q=q, rate=rate, it=it, lower=lower)
        return math.log(dist) - math.log(D)

    lo = hi = math.log(1.0 / (2 * D))
    while gap(lo) < 0:
        lo -= 2.0
    while gap(hi) > 0:
        hi += 2.0
    log_beta = optimize.brentq(gap, lo, hi, xtol=1e-7)
    gap(log_beta)
    return RDFCurvePoint(D, state["rate"], h, float(x[0]), len(x), -math.exp(log_beta),
                         state["it"], state["lower"])


@dataclass(frozen=True)
class LimitGaps:
    gaps: list[float]
    decreasing: bool

    def to_json(self) -> dict:
        return {"gaps": self.gaps, "decreasing": self.decreasing}


def drb_limit_gap(b: DRBResult, curve: Sequence[RDFCurvePoint]) -> LimitGaps:
    """``|R(D_j) + (d/2) log2(2 pi e D_j) - b|`` along a curve of decreasing D."""
    if len(curve) < 2:
        raise ValueError("need at least two curve points")
    ds = [pt.distortion for pt in curve]
    if any(b2 >= a for a, b2 in zip(ds, ds[1:])):
        raise ValueError("curve points must have strictly decreasing distortion")
    half_d = float(b.rid) / 2
    gaps = [abs(pt.rate_bits + half_d * math.log2(2 * math.pi * math.e * pt.distortion) - b.drb_bits)
            for pt in curve]
    return LimitGaps(gaps, all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:])))
