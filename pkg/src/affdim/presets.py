"""Worked examples used by ``affdim repro`` and the test suite."""
from __future__ import annotations

from fractions import Fraction

from .linalg import RationalMatrix
from .model import NuJointPMF, SourceSpec

HALF = Fraction(1, 2)

#: Invertible 3x3 mixing matrix.
A_INVERTIBLE = RationalMatrix.from_rows([[1, -1, "3/10"], [1, "1/2", 1], ["1/2", -1, "1/2"]])

#: Rank-2 mixing matrix.
A_DEFICIENT = RationalMatrix.from_rows([[1, 1, 0], [0, 1, 1], [1, 0, -1]])

#: Standard deviations 2i/5 of the three Bernoulli-Gaussian coordinates.
SIGMAS = (0.4, 0.8, 1.2)

A_ROW = RationalMatrix.from_rows([[1, 2]])

#: Indicator tables keyed "nu_1 nu_2"; all share the marginals (7/10, 2/5).
NU_TABLES = {
    "Q": {"00": "0.18", "01": "0.12", "10": "0.42", "11": "0.28"},
    "Q'": {"00": "0", "01": "0.3", "10": "0.6", "11": "0.1"},
    "Q''": {"00": "0.3", "01": "0", "10": "0.3", "11": "0.4"},
}

EXPECTED_ROW_RID = {"Q": Fraction(41, 50), "Q'": Fraction(1), "Q''": Fraction(7, 10)}

MA_TAPS = (Fraction(-2), Fraction(1, 2), Fraction(1))
MA_ALPHA = Fraction(7, 10)


def bg_triple(alpha=HALF) -> SourceSpec:
    return SourceSpec.bernoulli_gaussian([alpha] * 3, [s * s for s in SIGMAS])


def bg_scalar(alpha=HALF, variance: float = 1.0) -> SourceSpec:
    return SourceSpec.bernoulli_gaussian([alpha], variance)


def table_source(name: str) -> SourceSpec:
    nm = NuJointPMF.from_nu_table(NU_TABLES[name])
    base = SourceSpec.bernoulli_gaussian([HALF, HALF])
    return SourceSpec(2, base.continuous, nm)
