"""Quantum state redistribution under local coherence restrictions.

Layers, from the bottom up: labeled-register linear algebra (:mod:`.qmat`),
entropic quantities (:mod:`.entropy`), the coherence resource theory
(:mod:`.coherence`), one-shot protocols (:mod:`.protocols`) and closed-form
rate formulas (:mod:`.rates`).  ``qredist`` on the command line exposes the
same functionality; see :mod:`.cli`.
"""

from .coherence import (
    CollapsingMap,
    NotFreeOperation,
    ResourceTheory,
    coherence_theory,
    dephase,
    dephasing_map,
    is_free_state,
    is_incoherent_channel,
    maximally_coherent_state,
    neumark_dilation,
)
from .entropy import (
    EntropicValue,
    conditional_mutual_information,
    hypothesis_testing_relative_entropy,
    max_relative_entropy,
    mutual_information,
    relative_entropy,
    relative_entropy_of_coherence,
    relative_entropy_variance,
    restricted_hypothesis_testing,
    second_order_rate,
    smoothed_max_relative_entropy_upper_bound,
    von_neumann_entropy,
)
from .protocols import (
    BoundViolation,
    BudgetExceeded,
    ProtocolTranscript,
    QsrInstance,
    builtin_qsr_instances,
    coherence_creation,
    convex_split_bound_check,
    convex_split_state,
    qsr_full,
    qsr_parameters,
    uhlmann_isometry,
)
from .qmat import (
    DensityOperator,
    DimensionMismatch,
    InvalidState,
    Isometry,
    KrausChannel,
    Povm,
    RegisterError,
    RegisterSystem,
    StateVector,
    apply_channel,
    fidelity,
    partial_trace,
    purified_distance,
    purify,
    qubits,
    system,
    tensor,
    tensor_vectors,
    trace_norm_distance,
)
from .rates import (
    RateReport,
    classical_rate_incoherent,
    incoherent_qsr_rate,
    incoherent_schumacher_rate,
    one_shot_achievability_bound,
    rate_report,
    splitting_rate_general,
    standard_qsr_rates,
    tensor_power_state,
)
from .stateio import load_density, load_state, save_state, state_from_json, state_to_json

__version__ = "0.1.0"

__all__ = [
    "BoundViolation",
    "BudgetExceeded",
    "CollapsingMap",
    "DensityOperator",
    "DimensionMismatch",
    "EntropicValue",
    "InvalidState",
    "Isometry",
    "KrausChannel",
    "NotFreeOperation",
    "Povm",
    "ProtocolTranscript",
    "QsrInstance",
    "RateReport",
    "RegisterError",
    "RegisterSystem",
    "ResourceTheory",
    "StateVector",
    "apply_channel",
    "builtin_qsr_instances",
    "classical_rate_incoherent",
    "coherence_creation",
    "coherence_theory",
    "conditional_mutual_information",
    "convex_split_bound_check",
    "convex_split_state",
    "dephase",
    "dephasing_map",
    "fidelity",
    "hypothesis_testing_relative_entropy",
    "incoherent_qsr_rate",
    "incoherent_schumacher_rate",
    "is_free_state",
    "is_incoherent_channel",
    "load_density",
    "load_state",
    "max_relative_entropy",
    "maximally_coherent_state",
    "mutual_information",
    "neumark_dilation",
    "one_shot_achievability_bound",
    "partial_trace",
    "purified_distance",
    "purify",
    "qsr_full",
    "qsr_parameters",
    "qubits",
    "rate_report",
    "relative_entropy",
    "relative_entropy_of_coherence",
    "relative_entropy_variance",
    "restricted_hypothesis_testing",
    "save_state",
    "second_order_rate",
    "state_from_json",
    "state_to_json",
    "smoothed_max_relative_entropy_upper_bound",
    "splitting_rate_general",
    "standard_qsr_rates",
    "system",
    "tensor",
    "tensor_vectors",
    "trace_norm_distance",
    "uhlmann_isometry",
    "von_neumann_entropy",
]
