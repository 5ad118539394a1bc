"""Distilling GHZ states from single copies of arbitrary pure three-qubit states."""

from .measures import DistanceTriple, binary_entropy, distances, entanglement_entropy
from .povm import MeasurementBasis, PovmOutcome, alpha_big_step, alpha_for_target, povm_step
from .protocols import (
    DistillConfig,
    Protocol,
    ResiduePool,
    Terminal,
    TrajectoryRecord,
    YieldReport,
    baseline_epr_first,
    combine_eprs,
    full_pipeline,
    run_big_step,
    run_infinitesimal,
    secondary_yield,
)
from .special import (
    attractor_iterate,
    escape_step,
    golden_distance,
    golden_mean_state,
    is_triple_state,
    random_triple_state,
)
from .state import (
    BipartiteState,
    SchmidtView,
    TripartiteState,
    ghz_state,
    haar_random_state,
    load_state,
    local_probabilities,
    product_state,
    reduced_density,
    schmidt_decompose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
