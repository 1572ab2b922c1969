"""Information dimension and dimensional rate bias of linearly transformed
discrete-continuous sources."""

__version__ = "0.1.0"

from .linalg import RationalMatrix, rank, spark
from .model import (
    DiscreteSpec,
    Gaussian,
    NuJointPMF,
    SourceSpec,
    SpecError,
    Uniform,
    sample,
    source_from_json,
    source_to_json,
)
from .rid import check_spark_condition, lipschitz_upper_bound, rid_linear, rid_linear_mc, rid_sensitivity
from .decompose import decompose
from .drb import drb_linear, drb_of_decomposition, rdf_oracle_scalar
from .empirical import empirical_rid
from .ma import MAConfig, bid_report, build_ma_matrix, concentration_bounds, sample_size_threshold

__all__ = [
    "RationalMatrix", "rank", "spark",
    "DiscreteSpec", "Gaussian", "NuJointPMF", "SourceSpec", "SpecError", "Uniform",
    "sample", "source_from_json", "source_to_json",
    "check_spark_condition", "lipschitz_upper_bound", "rid_linear", "rid_linear_mc", "rid_sensitivity",
    "decompose", "drb_linear", "drb_of_decomposition", "rdf_oracle_scalar", "empirical_rid",
    "MAConfig", "bid_report", "build_ma_matrix", "concentration_bounds", "sample_size_threshold",
]
