"""Information dimension estimated from samples.

Quantize at a ladder of power-of-two scales, estimate the entropy of the
lattice codes, and fit entropy against ``log2(scale)``. The slope removes
the additive offset that would bias a single ``H / log m`` ratio.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import RationalMatrix
from .model import SampleBatch, SourceSpec, sample

#: Largest usable support-to-sample ratio before a scale is dropped.
MAX_SUPPORT_RATIO = 0.1


@dataclass
class QuantizedBatch:
    codes: np.ndarray
    scale: int
    seed: int

    def dequantize(self) -> np.ndarray:
        return self.codes / self.scale


def quantize(batch: SampleBatch, m: int) -> QuantizedBatch:
    """Integer lattice codes ``floor(m * x)``."""
    if m < 2:
        raise ValueError("scale must be >= 2")
    data = np.asarray(batch.data, dtype=float)
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite sample")
    return QuantizedBatch(np.floor(m * data).astype(np.int64), m, batch.seed)


def code_counts(codes: np.ndarray) -> np.ndarray:
    """Occurrence counts of each distinct code row."""
    c = np.ascontiguousarray(codes.reshape(codes.shape[0], -1))
    rows = c.view(np.dtype((np.void, c.dtype.itemsize * c.shape[1]))).ravel()
    _, counts = np.unique(rows, return_counts=True)
    return counts


def code_count_map(codes: np.ndarray) -> Counter:
    """Mergeable histogram keyed by code tuples; shards add with ``+``."""
    c = np.ascontiguousarray(codes.reshape(codes.shape[0], -1))
    uniq, counts = np.unique(c, axis=0, return_counts=True)
    return Counter({tuple(row): int(k) for row, k in zip(uniq.tolist(), counts.tolist())})


def entropy_from_counts(counts: np.ndarray) -> float:
    """Plug-in entropy plus the Miller-Madow term ``(K - 1) / (2 N ln 2)``, in bits."""
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    N = counts.sum()
    p = counts / N
    plug_in = float(-(p * np.log2(p)).sum())
    return plug_in + (len(counts) - 1) / (2 * N * math.log(2))


def plugin_entropy(q: QuantizedBatch) -> float:
    if q.codes.shape[0] < 100:
        raise ValueError("plugin_entropy needs at least 100 samples")
    return entropy_from_counts(code_counts(q.codes))


@dataclass
class RIDEstimate:
    slope: float
    intercept: float
    stderr: float
    scales: list[int]
    entropies: list[float]
    dropped: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "intercept": self.intercept,
            "scales": self.scales,
            "entropy_bits": self.entropies,
            "dropped_scales": self.dropped,
            "warnings": self.warnings,
        }


def fit_slope(scales: Sequence[int], entropies: Sequence[float]) -> tuple[float, float, float]:
    """Least squares of entropy on log2(scale): (slope, intercept, stderr)."""
    x = np.log2(np.asarray(scales, dtype=float))
    y = np.asarray(entropies, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two usable scales to fit a slope")
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    if len(x) > 2:
        resid = y - (intercept + slope * x)
        stderr = math.sqrt(float(resid @ resid) / (len(x) - 2) / sxx)
    else:
        stderr = float("nan")
    return slope, intercept, stderr


def empirical_rid(spec: SourceSpec, A: RationalMatrix | None, scales: Sequence[int], N: int, seed: int) -> RIDEstimate:
    """Slope estimate of the information dimension of ``A X`` (of X if A is None).

    A scale whose observed support exceeds ``MAX_SUPPORT_RATIO * N`` is
    dropped with a warning: the Miller-Madow correction no longer controls
    the bias there.
    """
    batch = sample(spec, N, seed)
    if A is not None:
        if A.cols != spec.n:
            raise ValueError(f"matrix has {A.cols} columns but the source has n={spec.n}")
        batch = SampleBatch(batch.data @ A.to_float().T, seed, batch.nu_draws)
    used, ents, dropped, warnings = [], [], [], []
    for m in sorted(scales):
        counts = code_counts(quantize(batch, m).codes)
        if len(counts) > MAX_SUPPORT_RATIO * N:
            dropped.append(m)
            warnings.append(f"scale {m}: {len(counts)} distinct codes for N={N}; undersampled, dropped")
            continue
        used.append(m)
        ents.append(entropy_from_counts(counts))
    slope, intercept, stderr = fit_slope(used, ents)
    return RIDEstimate(slope, intercept, stderr, used, ents, dropped, warnings)


def parse_scales(text: str) -> list[int]:
    """``"16..1024"`` -> powers of two from 16 to 1024; ``"4,8,32"`` -> as listed."""
    if ".." in text:
        lo, hi = (int(t) for t in text.split(".."))
        out, m = [], 1
        while m <= hi:
            if m >= lo:
                out.append(m)
            m *= 2
        return out
    return [int(t) for t in text.split(",") if t.strip()]
