"""Coordinate-wise discrete-continuous source model.

Each coordinate is ``X_i = nu_i * Xc_i + (1 - nu_i) * Xd_i``: a continuous
draw when the indicator ``nu_i`` is on, a discrete atom otherwise. The
indicators and atoms may be jointly dependent (explicit table) or
independent (product form); the continuous parts are independent of
everything else and of each other.

Indicator patterns are int masks internally (bit ``i`` is coordinate ``i``)
and bit strings like ``"0110"`` on the wire, character ``i`` being
coordinate ``i``.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Sequence, Union

import numpy as np
from scipy import stats

from .linalg import as_fraction, fraction_str

#: Rows per independently seeded sampling block.
BLOCK_ROWS = 1 << 16


class SpecError(ValueError):
    """A source/matrix/config failed validation; ``violations`` lists why."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    variance: float = 1.0

    kind = "gaussian"

    def entropy_bits(self) -> float:
        return 0.5 * math.log2(2 * math.pi * math.e * self.variance)

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.mean + math.sqrt(self.variance) * rng.standard_normal(size)

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mean, scale=math.sqrt(self.variance))

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def support(self, width: float = 6.0) -> tuple[float, float]:
        return self.mean - width * self.std, self.mean + width * self.std

    def to_json(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean, "variance": self.variance}


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    kind = "uniform"

    def entropy_bits(self) -> float:
        return math.log2(self.hi - self.lo)

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    @property
    def std(self) -> float:
        return (self.hi - self.lo) / math.sqrt(12)

    def support(self, width: float = 6.0) -> tuple[float, float]:
        return self.lo, self.hi

    def to_json(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


ContinuousSpec = Union[Gaussian, Uniform]


@dataclass(frozen=True)
class DiscreteSpec:
    """Finite atom set: ``((value, prob), ...)`` with exact rationals."""

    atoms: tuple[tuple[Fraction, Fraction], ...]

    @classmethod
    def of(cls, atoms) -> "DiscreteSpec":
        if isinstance(atoms, dict):
            atoms = atoms.items()
        return cls(tuple((as_fraction(v), as_fraction(p)) for v, p in atoms))

    @classmethod
    def point(cls, value=0) -> "DiscreteSpec":
        return cls(((as_fraction(value), Fraction(1)),))

    @property
    def values(self) -> tuple[Fraction, ...]:
        return tuple(v for v, _ in self.atoms)

    def entropy_bits(self) -> float:
        return -sum(float(p) * math.log2(p) for _, p in self.atoms if p > 0)


@dataclass(frozen=True)
class TableEntry:
    """One cell of the joint pmf: pattern, the atoms of its off coordinates, mass."""

    nu: int
    xd: tuple[tuple[int, Fraction], ...]
    prob: Fraction


@dataclass(frozen=True)
class NuJointPMF:
    """Joint law of the indicators and discrete atoms.

    Exactly one of the two forms is populated: ``alphas`` + ``discrete``
    (independent coordinates) or ``entries`` (explicit joint table).
    """

    n: int
    alphas: tuple[Fraction, ...] | None = None
    discrete: tuple[DiscreteSpec, ...] | None = None
    entries: tuple[TableEntry, ...] | None = None

    @classmethod
    def independent(cls, alphas: Sequence, discrete: Sequence[DiscreteSpec] | DiscreteSpec) -> "NuJointPMF":
        a = tuple(as_fraction(x) for x in alphas)
        if isinstance(discrete, DiscreteSpec):
            discrete = [discrete] * len(a)
        return cls(n=len(a), alphas=a, discrete=tuple(discrete))

    @classmethod
    def from_nu_table(cls, table: dict, atom=0) -> "NuJointPMF":
        """Table keyed by bit strings; every off coordinate takes ``atom``."""
        n = len(next(iter(table)))
        value = as_fraction(atom)
        entries = []
        for key, p in table.items():
            mask = nu_from_str(key)
            xd = tuple((i, value) for i in range(n) if not mask >> i & 1)
            entries.append(TableEntry(mask, xd, as_fraction(p)))
        return cls(n=n, entries=tuple(entries))

    @property
    def is_product(self) -> bool:
        return self.entries is None

    def marginal_alpha(self) -> list[Fraction]:
        if self.is_product:
            return list(self.alphas)
        out = [Fraction(0)] * self.n
        for e in self.entries:
            for i in range(self.n):
                if e.nu >> i & 1:
                    out[i] += e.prob
        return out

    def nu_pmf(self) -> dict[int, Fraction]:
        """Distribution of the indicator pattern, zero-mass patterns dropped."""
        if self.is_product:
            out = {}
            for mask, p in zip(range(1 << self.n), product_weights(self.alphas)):
                if p:
                    out[mask] = p
            return out
        out: dict[int, Fraction] = {}
        for e in self.entries:
            if e.prob:
                out[e.nu] = out.get(e.nu, Fraction(0)) + e.prob
        return out

    def support(self) -> Iterator[TableEntry]:
        """Every (pattern, off-coordinate atoms) cell with positive mass."""
        if not self.is_product:
            yield from (e for e in self.entries if e.prob > 0)
            return
        for mask, pnu in self.nu_pmf().items():
            off = [i for i in range(self.n) if not mask >> i & 1]
            for choice in itertools.product(*(self.discrete[i].atoms for i in off)):
                p = pnu
                for _, pa in choice:
                    p *= pa
                if p:
                    yield TableEntry(mask, tuple((i, v) for i, (v, _) in zip(off, choice)), p)

    def entropy_bits(self) -> float:
        """H(nu, X_d) restricted to the off coordinates, in bits."""
        if self.is_product:
            h = 0.0
            for a, d in zip(self.alphas, self.discrete):
                h += binary_entropy_bits(a) + float(1 - a) * d.entropy_bits()
            return h
        return -sum(float(e.prob) * math.log2(e.prob) for e in self.entries if e.prob > 0)

    @cached_property
    def _float_table(self):
        entries = list(self.support())
        probs = np.array([float(e.prob) for e in entries])
        nus = np.array([[e.nu >> i & 1 for i in range(self.n)] for e in entries], dtype=bool)
        xd = np.zeros((len(entries), self.n))
        for k, e in enumerate(entries):
            for i, v in e.xd:
                xd[k, i] = float(v)
        return np.cumsum(probs / probs.sum()), nus, xd


def binary_entropy_bits(p) -> float:
    p = float(p)
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def product_weights(alphas: Sequence[Fraction]) -> list[Fraction]:
    """``w[mask] = prod_i alpha_i^nu_i (1 - alpha_i)^(1 - nu_i)`` for all masks."""
    w = [Fraction(1)]
    for a in alphas:
        off, on = 1 - a, a
        w = [x * off for x in w] + [x * on for x in w]
    return w


def nu_from_str(bits: str) -> int:
    if not bits or any(c not in "01" for c in bits):
        raise ValueError(f"bad indicator pattern {bits!r}")
    return sum(1 << i for i, c in enumerate(bits) if c == "1")


def nu_to_str(mask: int, n: int) -> str:
    return "".join("1" if mask >> i & 1 else "0" for i in range(n))


@dataclass(frozen=True)
class SourceSpec:
    n: int
    continuous: tuple[ContinuousSpec, ...]
    nu_model: NuJointPMF

    @classmethod
    def bernoulli_gaussian(cls, alphas: Sequence, variances: Sequence[float] | float = 1.0, atom=0) -> "SourceSpec":
        """Independent coordinates: atom w.p. 1 - alpha_i, centred Gaussian otherwise."""
        a = [as_fraction(x) for x in alphas]
        if isinstance(variances, (int, float)):
            variances = [float(variances)] * len(a)
        cont = tuple(Gaussian(0.0, float(v)) for v in variances)
        return cls(len(a), cont, NuJointPMF.independent(a, DiscreteSpec.point(atom)))

    @property
    def all_gaussian(self) -> bool:
        return all(isinstance(c, Gaussian) for c in self.continuous)

    def with_alpha(self, i: int, alpha) -> "SourceSpec":
        if not self.nu_model.is_product:
            raise ValueError("with_alpha needs the independent form")
        a = list(self.nu_model.alphas)
        a[i] = as_fraction(alpha)
        nm = NuJointPMF(self.n, tuple(a), self.nu_model.discrete)
        return SourceSpec(self.n, self.continuous, nm)


@dataclass
class SampleBatch:
    data: np.ndarray
    seed: int
    nu_draws: np.ndarray

    @property
    def size(self) -> int:
        return self.data.shape[0]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _check_discrete(d: DiscreteSpec, where: str) -> list[str]:
    out = []
    if not d.atoms:
        out.append(f"DiscreteSpec[{where}]: at least one atom required")
        return out
    if len(set(d.values)) != len(d.values):
        out.append(f"DiscreteSpec[{where}]: atom values must be distinct")
    if any(p <= 0 or p > 1 for _, p in d.atoms):
        out.append(f"DiscreteSpec[{where}]: atom probabilities must lie in (0, 1]")
    total = sum((p for _, p in d.atoms), Fraction(0))
    if total != 1:
        out.append(f"DiscreteSpec[{where}]: atom probabilities sum to {total}, not 1")
    return out


def validate(spec: SourceSpec) -> list[str]:
    """Return every invariant violation as ``"Type[where]: rule"``; empty if valid."""
    out: list[str] = []
    if spec.n < 1:
        out.append("SourceSpec: n must be >= 1")
    if len(spec.continuous) != spec.n:
        out.append(f"SourceSpec: {len(spec.continuous)} continuous parts for n={spec.n}")
    for i, c in enumerate(spec.continuous):
        if isinstance(c, Gaussian):
            if not (math.isfinite(c.variance) and c.variance > 0):
                out.append(f"ContinuousSpec[{i}]: variance must be > 0")
            if not math.isfinite(c.mean):
                out.append(f"ContinuousSpec[{i}]: mean must be finite")
        elif isinstance(c, Uniform):
            if not (math.isfinite(c.lo) and math.isfinite(c.hi) and c.hi > c.lo):
                out.append(f"ContinuousSpec[{i}]: need finite lo < hi")
        else:
            out.append(f"ContinuousSpec[{i}]: unsupported family {type(c).__name__}")
    nm = spec.nu_model
    if nm.n != spec.n:
        out.append(f"NuJointPMF: dimension {nm.n} does not match n={spec.n}")
        return out
    if nm.is_product:
        if nm.alphas is None or nm.discrete is None or len(nm.alphas) != nm.n or len(nm.discrete) != nm.n:
            out.append("NuJointPMF: product form needs one alpha and one DiscreteSpec per coordinate")
            return out
        for i, a in enumerate(nm.alphas):
            if not 0 <= a <= 1:
                out.append(f"NuJointPMF[{i}]: alpha {a} outside [0, 1]")
        for i, d in enumerate(nm.discrete):
            out.extend(_check_discrete(d, str(i)))
        return out
    total = Fraction(0)
    seen = set()
    for k, e in enumerate(nm.entries):
        if e.prob < 0:
            out.append(f"NuJointPMF[entry {k}]: negative probability {e.prob}")
        total += e.prob
        off = {i for i in range(nm.n) if not e.nu >> i & 1}
        keys = [i for i, _ in e.xd]
        if e.nu >> nm.n:
            out.append(f"NuJointPMF[entry {k}]: pattern has bits beyond n={nm.n}")
        if set(keys) != off or len(keys) != len(off):
            out.append(
                f"NuJointPMF[entry {k}]: atoms given for {sorted(keys)} but off coordinates are {sorted(off)}"
            )
        key = (e.nu, tuple(sorted(e.xd)))
        if key in seen:
            out.append(f"NuJointPMF[entry {k}]: duplicate cell {nu_to_str(e.nu, nm.n)}")
        seen.add(key)
    if total != 1:
        out.append(f"NuJointPMF: probabilities sum to {total}, not 1")
    return out


def ensure_valid(spec: SourceSpec) -> SourceSpec:
    problems = validate(spec)
    if problems:
        raise SpecError(problems)
    return spec


def marginal_alpha(spec: SourceSpec) -> list[Fraction]:
    return spec.nu_model.marginal_alpha()


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("AFFDIM_THREADS", "1")))
    except ValueError:
        return 1


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _sample_block(spec: SourceSpec, rows: int, rng: np.random.Generator):
    n, nm = spec.n, spec.nu_model
    if nm.is_product:
        alphas = np.array([float(a) for a in nm.alphas])
        nu = rng.random((rows, n)) < alphas
        disc = np.empty((rows, n))
        u = rng.random((rows, n))
        for i, d in enumerate(nm.discrete):
            cum = np.cumsum([float(p) for _, p in d.atoms])
            idx = np.minimum(np.searchsorted(cum / cum[-1], u[:, i], side="right"), len(cum) - 1)
            disc[:, i] = np.array([float(v) for v in d.values])[idx]
    else:
        cum, nus, xd = nm._float_table
        idx = np.minimum(np.searchsorted(cum, rng.random(rows), side="right"), len(cum) - 1)
        nu, disc = nus[idx], xd[idx]
    cont = np.empty((rows, n))
    for i, c in enumerate(spec.continuous):
        cont[:, i] = c.draw(rng, rows)
    return np.where(nu, cont, disc), nu


def sample(spec: SourceSpec, N: int, seed: int, workers: int | None = None) -> SampleBatch:
    """Draw ``N`` i.i.d. rows.

    Rows are produced in fixed blocks of :data:`BLOCK_ROWS`, block ``b``
    seeded from ``(seed, b)`` with a Philox counter generator, so the output
    depends on ``seed`` only, never on ``workers``.
    """
    if N < 1:
        raise ValueError("empty batch")
    if not 0 <= seed < 1 << 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ensure_valid(spec)
    sizes = [min(BLOCK_ROWS, N - s) for s in range(0, N, BLOCK_ROWS)]
    workers = workers or _default_workers()

    def run(b):
        return _sample_block(spec, sizes[b], _block_rng(seed, b))

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    data = np.concatenate([p[0] for p in parts])
    nu = np.concatenate([p[1] for p in parts])
    return SampleBatch(data=data, seed=seed, nu_draws=nu.astype(np.uint8))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _continuous_from_json(obj: dict, i: int) -> ContinuousSpec:
    kind = str(obj.get("kind", "gaussian")).lower()
    if kind == "gaussian":
        return Gaussian(float(as_fraction(obj.get("mean", 0))), float(as_fraction(obj.get("variance", 1))))
    if kind == "uniform":
        return Uniform(float(as_fraction(obj["lo"])), float(as_fraction(obj["hi"])))
    raise SpecError([f"ContinuousSpec[{i}]: unknown kind {kind!r}"])


def source_from_json(obj: dict) -> SourceSpec:
    """Parse the source file format; structural problems raise :class:`SpecError`."""
    try:
        n = int(obj["n"])
        coords = obj["coordinates"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError([f"SourceSpec: missing or bad field ({exc})"]) from exc
    if len(coords) != n:
        raise SpecError([f"SourceSpec: {len(coords)} coordinates listed for n={n}"])
    try:
        cont = tuple(_continuous_from_json(c.get("continuous", {}), i) for i, c in enumerate(coords))
        discrete = tuple(DiscreteSpec.of([(a["value"], a["prob"]) for a in c.get("atoms", [])]) for c in coords)
        if "joint_table" not in obj:
            alphas = tuple(as_fraction(c["alpha"]) for c in coords)
            return SourceSpec(n, cont, NuJointPMF(n, alphas, discrete))
        entries = []
        for k, row in enumerate(obj["joint_table"]):
            mask = nu_from_str(row["nu"])
            if len(row["nu"]) != n:
                raise SpecError([f"NuJointPMF[entry {k}]: pattern {row['nu']!r} has length != {n}"])
            given = {int(i): as_fraction(v) for i, v in row.get("xd", {}).items()}
            for i in range(n):
                if not mask >> i & 1 and i not in given and len(discrete[i].atoms) == 1:
                    given[i] = discrete[i].values[0]
            entries.append(TableEntry(mask, tuple(sorted(given.items())), as_fraction(row["prob"])))
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError([f"SourceSpec: malformed field ({exc!r})"]) from exc
    spec = SourceSpec(n, cont, NuJointPMF(n=n, entries=tuple(entries)))
    problems = []
    for i, c in enumerate(coords):
        if "alpha" in c and as_fraction(c["alpha"]) != spec.nu_model.marginal_alpha()[i]:
            problems.append(f"NuJointPMF[{i}]: declared alpha {c['alpha']} differs from table marginal")
    for e in entries:
        for i, v in e.xd:
            if discrete[i].atoms and v not in discrete[i].values:
                problems.append(f"NuJointPMF: atom {v} of coordinate {i} not among its declared atoms")
    if problems:
        raise SpecError(problems)
    return spec


def source_to_json(spec: SourceSpec) -> dict:
    nm = spec.nu_model
    alphas = nm.marginal_alpha()
    coords = []
    for i in range(spec.n):
        c = {"alpha": fraction_str(alphas[i]), "continuous": spec.continuous[i].to_json()}
        if nm.is_product:
            c["atoms"] = [{"value": fraction_str(v), "prob": fraction_str(p)} for v, p in nm.discrete[i].atoms]
        coords.append(c)
    out = {"n": spec.n, "coordinates": coords}
    if not nm.is_product:
        out["joint_table"] = [
            {
                "nu": nu_to_str(e.nu, spec.n),
                "xd": {str(i): fraction_str(v) for i, v in e.xd},
                "prob": fraction_str(e.prob),
            }
            for e in nm.entries
        ]
    return out
