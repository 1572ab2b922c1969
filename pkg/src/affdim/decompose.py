"""Affine-subset decomposition of ``Y = A X``.

Fixing the indicator pattern ``nu`` and the atoms ``x_d`` of the off
coordinates pins ``Y`` to the affine set ``span(A^nu) + A^{~nu} x_d``. Each
set is keyed by the canonical form of its direction space and the exact
projection of its offset onto the orthogonal complement; cells that share
a key are merged into one component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import roots_hermitenorm

from .linalg import (
    RationalMatrix,
    SubspaceCanonical,
    column_submatrix,
    fraction_str,
    orthonormal_basis,
    project_orthogonal,
    subspace_canonical,
)
from .model import Gaussian, SourceSpec, Uniform, ensure_valid, nu_to_str
from .rid import ENUMERATION_CAP, EnumerationCapError

#: Gauss-Hermite points per axis for mixture entropies, by component dimension.
_GH_POINTS = {1: 96, 2: 48, 3: 20}
_MC_MIXTURE_SAMPLES = 200_000


@dataclass
class AffineComponent:
    subspace: SubspaceCanonical
    shift: tuple[Fraction, ...]
    prob: Fraction
    members: list[tuple[int, tuple[tuple[int, Fraction], ...], Fraction]] = field(default_factory=list)
    diff_entropy_bits: float | None = None

    @property
    def dim(self) -> int:
        return self.subspace.dimension

    def to_json(self, n: int, audit: bool = False) -> dict:
        out = {
            "dim": self.dim,
            "prob": fraction_str(self.prob),
            "basis": self.subspace.to_json(),
            "shift": [fraction_str(v) for v in self.shift],
            "members_count": len(self.members),
            "diff_entropy_bits": "unavailable" if self.diff_entropy_bits is None else self.diff_entropy_bits,
        }
        if audit:
            out["members"] = [
                {"nu": nu_to_str(nu, n), "xd": {str(i): fraction_str(v) for i, v in xd}, "prob": fraction_str(p)}
                for nu, xd, p in self.members
            ]
        return out


@dataclass
class Decomposition:
    components: list[AffineComponent]
    selector_entropy_bits: float
    total_dim: int
    source_entropy_bits: float

    @property
    def rid(self) -> Fraction:
        return sum((c.prob * c.dim for c in self.components), Fraction(0))


def selector_entropy(D: Decomposition) -> float:
    """H(V) in bits: entropy of which component a realization lies on."""
    return -sum(float(c.prob) * math.log2(c.prob) for c in D.components if c.prob > 0)


def decompose(spec: SourceSpec, A: RationalMatrix, with_entropy: bool = False) -> Decomposition:
    ensure_valid(spec)
    if A.cols != spec.n:
        raise ValueError(f"matrix has {A.cols} columns but the source has n={spec.n}")
    if spec.n > ENUMERATION_CAP:
        raise EnumerationCapError(f"n={spec.n} exceeds the enumeration cap {ENUMERATION_CAP}")
    cols = A.columns()
    per_nu: dict[int, tuple[SubspaceCanonical, dict[int, tuple[Fraction, ...]]]] = {}
    groups: dict[tuple, AffineComponent] = {}
    for cell in spec.nu_model.support():
        if cell.nu not in per_nu:
            S = subspace_canonical(column_submatrix(A, cell.nu))
            off = [i for i in range(spec.n) if not cell.nu >> i & 1]
            per_nu[cell.nu] = (S, {i: project_orthogonal(cols[i], S) for i in off})
        S, projected = per_nu[cell.nu]
        shift = [Fraction(0)] * A.rows
        for i, v in cell.xd:
            if v:
                shift = [s + v * c for s, c in zip(shift, projected[i])]
        key = (S.basis, tuple(shift))
        comp = groups.get(key)
        if comp is None:
            comp = groups[key] = AffineComponent(S, tuple(shift), Fraction(0))
        comp.prob += cell.prob
        comp.members.append((cell.nu, cell.xd, cell.prob))
    comps = sorted(groups.values(), key=lambda c: (c.dim, c.subspace.basis, c.shift))
    D = Decomposition(comps, 0.0, A.rows, spec.nu_model.entropy_bits())
    D.selector_entropy_bits = selector_entropy(D)
    if with_entropy:
        for c in comps:
            c.diff_entropy_bits = component_diff_entropy(spec, A, c)
    return D


def _member_gaussian(spec: SourceSpec, A: np.ndarray, Q: np.ndarray, nu: int, xd) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of one member's coordinates inside the component."""
    on = [i for i in range(spec.n) if nu >> i & 1]
    mean = np.zeros(A.shape[0])
    for i in on:
        mean += A[:, i] * spec.continuous[i].mean
    for i, v in xd:
        mean += A[:, i] * float(v)
    B = Q.T @ A[:, on]
    var = np.array([spec.continuous[i].variance for i in on])
    return Q.T @ mean, (B * var) @ B.T


def _gaussian_entropy_bits(cov: np.ndarray) -> float:
    r = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return -math.inf
    return float(0.5 * (r * math.log(2 * math.pi * math.e) + logdet) / math.log(2))


def _mixture_log_density(x: np.ndarray, weights, means, chols, logdets) -> np.ndarray:
    r = x.shape[1]
    terms = []
    for w, mu, L, ld in zip(weights, means, chols, logdets):
        z = np.linalg.solve(L, (x - mu).T)
        terms.append(math.log(w) - 0.5 * (np.sum(z * z, axis=0) + ld + r * math.log(2 * math.pi)))
    return np.logaddexp.reduce(np.array(terms), axis=0)


def gaussian_mixture_entropy_bits(weights, means, covs, seed: int = 0) -> float:
    """Differential entropy of a Gaussian mixture.

    Tensor Gauss-Hermite quadrature per member for dimension <= 3, seeded
    Monte Carlo beyond.
    """
    weights = [float(w) / float(sum(weights)) for w in weights]
    r = len(means[0])
    chols = [np.linalg.cholesky(c) for c in covs]
    logdets = [2 * float(np.sum(np.log(np.diag(L)))) for L in chols]
    if len(weights) == 1:
        return _gaussian_entropy_bits(np.asarray(covs[0]))
    total = 0.0
    if r in _GH_POINTS:
        z1, w1 = roots_hermitenorm(_GH_POINTS[r])
        w1 = w1 / w1.sum()
        grids = np.meshgrid(*([z1] * r), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=1)
        wz = np.ones(len(z))
        for ax in np.meshgrid(*([w1] * r), indexing="ij"):
            wz = wz * ax.ravel()
        for w, mu, L in zip(weights, means, chols):
            x = mu + z @ L.T
            total -= w * float(wz @ _mixture_log_density(x, weights, means, chols, logdets))
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        for w, mu, L in zip(weights, means, chols):
            x = mu + rng.standard_normal((_MC_MIXTURE_SAMPLES, r)) @ L.T
            total -= w * float(np.mean(_mixture_log_density(x, weights, means, chols, logdets)))
    return total / math.log(2)


def component_diff_entropy(spec: SourceSpec, A: RationalMatrix, comp: AffineComponent) -> float | None:
    """Differential entropy (bits) of a component's law inside its subspace.

    Coordinates are taken in an orthonormal basis of the component's span,
    the same basis for every member, so the component law is the mixture of
    its members' laws weighted by their conditional probabilities. Gaussian
    continuous parts are supported in general; uniform ones only for a
    single member with an injective map. Returns None when unavailable.
    """
    if comp.dim == 0:
        return 0.0
    Af = A.to_float()
    Q = orthonormal_basis(comp.subspace)
    members = [(nu, xd, p) for nu, xd, p in comp.members if p > 0]
    on_sets = [[i for i in range(spec.n) if nu >> i & 1] for nu, _, _ in members]
    if all(isinstance(spec.continuous[i], Gaussian) for on in on_sets for i in on):
        means, covs = [], []
        for nu, xd, _ in members:
            mu, cov = _member_gaussian(spec, Af, Q, nu, xd)
            means.append(mu)
            covs.append(cov)
        return gaussian_mixture_entropy_bits([p for _, _, p in members], means, covs)
    if len(members) == 1 and len(on_sets[0]) == comp.dim:
        on = on_sets[0]
        if all(isinstance(spec.continuous[i], (Gaussian, Uniform)) for i in on):
            B = Q.T @ Af[:, on]
            _, logdet = np.linalg.slogdet(B)
            return float(logdet / math.log(2)) + sum(spec.continuous[i].entropy_bits() for i in on)
    return None
