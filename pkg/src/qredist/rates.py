"""Closed-form communication rates for redistributing a register.

Conventions: the global state lives on registers R (reference), A (sender),
B (receiver side information), C (the register to move); rates are reported
in qubits per copy unless converted.  Register A or B may be trivial
(dimension one).  Cobit-denominated expressions are exactly twice their
qubit counterparts; the classical rate is denominated in classical bits in
either view.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .coherence import NotFreeOperation, dephase, is_free_state
from .entropy import (
    conditional_entropy,
    conditional_mutual_information,
    max_relative_entropy,
    mutual_information,
    relative_entropy,
    relative_entropy_of_coherence,
    restricted_hypothesis_testing,
    smoothed_max_relative_entropy_upper_bound,
    von_neumann_entropy,
)
from .coherence import ResourceTheory
from .protocols import QsrInstance
from .qmat import (
    DensityOperator,
    InvalidState,
    RegisterError,
    RegisterSystem,
    StateVector,
    partial_trace,
    permute_vector,
    relabel_vector,
    tensor,
    tensor_vectors,
    vector_marginal,
)

FORM_TOL = 1e-9

QUBIT_UNITS = "qubits per copy"
COBIT_UNITS = "cobits per copy"


@dataclass(frozen=True)
class RateReport:
    """All closed-form rates for one input state, tagged with units.

    ``classical_rate_incoherent`` stays in classical bits per copy under
    either unit system; the remaining entries scale by two when converted
    from qubits to cobits.
    """

    q_min_std: float
    q_plus_e_min_std: float
    sum_bound_slepian_wolf: float
    q_min_incoherent: float
    q_min_schumacher_incoherent: float
    q_min_splitting_incoherent: float
    classical_rate_incoherent: float
    units: str = QUBIT_UNITS
    details: dict[str, Any] = field(default_factory=dict)

    _SCALED = (
        "q_min_std", "q_plus_e_min_std", "sum_bound_slepian_wolf",
        "q_min_incoherent", "q_min_schumacher_incoherent",
        "q_min_splitting_incoherent",
    )
    _FIELDS = _SCALED + ("classical_rate_incoherent",)

    def __post_init__(self):
        for name in self._FIELDS:
            val = getattr(self, name)
            if not math.isfinite(val):
                raise InvalidState(f"rate entry {name} is not finite: {val}")
        if self.units == QUBIT_UNITS and (
            self.q_min_incoherent < self.q_min_std - FORM_TOL
        ):
            raise InvalidState(
                "incoherent rate fell below the unrestricted rate: "
                f"{self.q_min_incoherent} < {self.q_min_std}"
            )

    def in_units(self, units: str) -> "RateReport":
        if units == self.units:
            return self
        if {units, self.units} != {QUBIT_UNITS, COBIT_UNITS}:
            raise ValueError(f"unknown unit conversion {self.units!r} -> {units!r}")
        factor = 2.0 if units == COBIT_UNITS else 0.5
        changes = {name: getattr(self, name) * factor for name in self._SCALED}
        return replace(self, units=units, **changes)

    def entries(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self._FIELDS}

    def to_json(self) -> dict[str, Any]:
        return {"units": self.units, "rates": self.entries(), "details": self.details}

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rate", "value", "units"])
        for name, val in self.entries().items():
            units = "classical bits per copy" if name == "classical_rate_incoherent" else self.units
            w.writerow([name, repr(val), units])
        return buf.getvalue()


def _marginal(psi: StateVector, labels: list[str]) -> DensityOperator:
    present = [lab for lab in labels if lab in psi.system.labels]
    if not present:
        raise RegisterError(f"state has none of the registers {labels}")
    return vector_marginal(psi, present)


def _require(psi: StateVector, labels: set[str]) -> None:
    missing = labels - set(psi.system.labels)
    if missing:
        raise RegisterError(f"state is missing registers {sorted(missing)}")


# ---------------------------------------------------------------------------
# unrestricted rates

def standard_qsr_rates(psi: StateVector) -> tuple[float, float]:
    """(Q, Q + E): half the conditional mutual information, and S(C|B)."""
    _require(psi, {"R", "B", "C"})
    rho = _marginal(psi, ["R", "B", "C"])
    q = 0.5 * conditional_mutual_information(rho, "C", "R", "B")
    q_plus_e = conditional_entropy(rho, "C", "B")
    return q, q_plus_e


def slepian_wolf_sum_bound(psi: StateVector) -> float:
    """Total resource lower bound S of the dephased (B, C) state given dephased B."""
    _require(psi, {"B", "C"})
    rho_bc = _marginal(psi, ["B", "C"])
    return (
        von_neumann_entropy(dephase(rho_bc))
        - von_neumann_entropy(dephase(partial_trace(rho_bc, ["B"])))
    )


# ---------------------------------------------------------------------------
# rates with a free (incoherent) decoder

def _free_sigma(psi: StateVector, sigma_c: DensityOperator | None) -> DensityOperator:
    rho_c = _marginal(psi, ["C"])
    if sigma_c is None:
        return dephase(rho_c)
    if sigma_c.system.labels != ("C",):
        raise RegisterError("sigma_c must live on register C")
    if sigma_c.system.dim != rho_c.system.dim:
        raise RegisterError("sigma_c dimension does not match register C")
    if not is_free_state(sigma_c):
        raise NotFreeOperation("sigma_c must be diagonal")
    return sigma_c


def incoherent_rate_forms(
    psi: StateVector, sigma_c: DensityOperator | None = None
) -> tuple[float, float, float]:
    """The cobit-denominated rate along three independent numerical routes.

    Entropy differences of dephased marginals, direct relative entropies to
    the dephased marginals, and the difference of relative entropies
    against a product with a free reference state; the three agree exactly
    in closed form, so disagreement flags a numerical defect.
    """
    _require(psi, {"R", "B", "C"})
    rho_rbc = _marginal(psi, ["R", "B", "C"])
    rho_bc = partial_trace(rho_rbc, ["B", "C"])
    rho_b = partial_trace(rho_rbc, ["B"])
    cmi = conditional_mutual_information(rho_rbc, "R", "C", "B")

    form_entropy = (
        cmi
        + relative_entropy_of_coherence(rho_bc)
        - relative_entropy_of_coherence(rho_b)
    )
    form_relent = (
        cmi
        + relative_entropy(rho_bc, dephase(rho_bc)).value
        - relative_entropy(rho_b, dephase(rho_b)).value
    )

    sigma = _free_sigma(psi, sigma_c)
    rho_rb = partial_trace(rho_rbc, ["R", "B"])
    d1 = relative_entropy(rho_rbc, tensor(rho_rb, sigma))
    d2 = relative_entropy(dephase(rho_bc), tensor(dephase(rho_b), sigma))
    if not (d1.finite and d2.finite):
        raise InvalidState("reference state sigma_c does not support the C marginal")
    form_product = d1.value - d2.value
    return form_entropy, form_relent, form_product


def incoherent_qsr_rate(
    psi: StateVector,
    sigma_c: DensityOperator | None = None,
    tol: float = FORM_TOL,
) -> float:
    """Qubit rate for redistribution with an incoherent decoder.

    Half of {I(C:R|B) plus the local-coherence gap between the (B, C) and B
    marginals}; all three computation routes must agree to ``tol``.
    """
    a, b, c = incoherent_rate_forms(psi, sigma_c)
    spread = max(a, b, c) - min(a, b, c)
    if spread > tol:
        raise ArithmeticError(
            f"rate forms disagree beyond {tol}: {a}, {b}, {c}"
        )
    return 0.5 * a


def incoherent_schumacher_rate(rho_c: DensityOperator) -> float:
    """Compression rate with incoherent decoding: mean of S and dephased S."""
    return 0.5 * (
        von_neumann_entropy(rho_c) + von_neumann_entropy(dephase(rho_c))
    )


def incoherent_slepian_wolf_rate(psi: StateVector) -> float:
    """Qubit rate when the reference is not conditioned on: B may be present."""
    _require(psi, {"R", "C"})
    labels = ["R", "B", "C"] if "B" in psi.system.labels else ["R", "C"]
    rho = _marginal(psi, labels)
    rho_bc = partial_trace(rho, [lab for lab in labels if lab != "R"])
    if "B" in psi.system.labels:
        rho_b = partial_trace(rho, ["B"])
        rc_b = relative_entropy_of_coherence(rho_b)
    else:
        rc_b = 0.0
    return 0.5 * (
        mutual_information(rho, "C", "R")
        + relative_entropy_of_coherence(rho_bc)
        - rc_b
    )


def incoherent_splitting_rate(psi: StateVector) -> float:
    """Qubit rate for handing C to a receiver with no prior side information."""
    _require(psi, {"R", "C"})
    rho_rc = _marginal(psi, ["R", "C"])
    return 0.5 * (
        mutual_information(rho_rc, "C", "R")
        + relative_entropy_of_coherence(partial_trace(rho_rc, ["C"]))
    )


def classical_rate_incoherent(
    psi: StateVector, sigma_c: DensityOperator | None = None
) -> float:
    """Forward classical bits per copy: twice the incoherent qubit rate."""
    return 2.0 * incoherent_qsr_rate(psi, sigma_c)


# ---------------------------------------------------------------------------
# splitting in a general resource theory

@dataclass(frozen=True)
class SplittingRate:
    value: float
    units: str
    theory: str
    regularization_evaluated: bool


def splitting_rate_general(psi: StateVector, theory: ResourceTheory) -> SplittingRate:
    """Cobit rate I(R:C) plus the distance of the C marginal from the free set.

    For the dephasing theory the regularized distance collapses to the
    single-copy value by additivity; other theories get the single-letter
    evaluation with the regularization flagged as not evaluated.
    """
    _require(psi, {"R", "C"})
    rho_rc = _marginal(psi, ["R", "C"])
    rho_c = partial_trace(rho_rc, ["C"])
    value = mutual_information(rho_rc, "R", "C") + theory.min_relative_entropy_to_free(rho_c)
    return SplittingRate(
        value=float(value),
        units=COBIT_UNITS,
        theory=theory.name,
        regularization_evaluated=(theory.name == "coherence"),
    )


# ---------------------------------------------------------------------------
# one-shot bound and audits

def one_shot_achievability_bound(
    instance: QsrInstance, smoothing: str = "none"
) -> float:
    """Sufficient cobit count for one run of the instance.

    The leading term substitutes the plain max-relative entropy
    (``smoothing="none"``) or its eigenvalue-pruning upper bound at
    smoothing radius eps1 (``smoothing="prune"``) for the smoothed
    max-relative entropy; both dominate the smoothed quantity, so the
    returned count remains sufficient.
    """
    psi = instance.psi
    phi_rbc = vector_marginal(psi, ["R", "B", "C"])
    phi_rb = vector_marginal(psi, ["R", "B"])
    phi_bc = vector_marginal(psi, ["B", "C"])
    phi_b = vector_marginal(psi, ["B"])
    ref = tensor(phi_rb, instance.sigma_c)
    if smoothing == "none":
        k = max_relative_entropy(phi_rbc, ref)
        if not k.finite:
            raise InvalidState("instance violates the support condition against sigma_c")
        k_val = k.value
    elif smoothing == "prune":
        k = smoothed_max_relative_entropy_upper_bound(phi_rbc, ref, instance.eps1)
        if not k.finite:
            raise InvalidState("instance violates the support condition against sigma_c")
        k_val = k.value
    else:
        raise ValueError(f"unknown smoothing mode {smoothing!r}")
    d_f = restricted_hypothesis_testing(
        phi_bc, tensor(phi_b, instance.sigma_c), instance.eps2 ** 4
    )
    if not d_f.finite:
        raise InvalidState("free test diverges; sigma_c unsupported on the C marginal")
    const = 2.0 * math.log2(2.0 / (instance.eps1 * instance.gamma ** 2))
    return k_val - d_f.value + const


def audit_converse_equals_achievability(
    psi: StateVector,
    sigma_c: DensityOperator | None = None,
    tol: float = FORM_TOL,
) -> tuple[float, float]:
    """The necessary and the sufficient asymptotic cobit rates coincide.

    Evaluates the achievable rate as a difference of relative entropies
    against a free reference and the necessary rate as conditional mutual
    information plus the local-coherence gap; returns both and raises if
    they differ beyond ``tol``.
    """
    forms = incoherent_rate_forms(psi, sigma_c)
    achievability = forms[2]
    converse = forms[1]
    if abs(achievability - converse) > tol:
        raise ArithmeticError(
            f"achievable rate {achievability} and necessary rate {converse} disagree"
        )
    return achievability, converse


# ---------------------------------------------------------------------------
# report assembly and product copies

def rate_report(
    psi: StateVector, sigma_c: DensityOperator | None = None
) -> RateReport:
    """Evaluate every closed-form rate on one (R, A, B, C) pure state."""
    q, q_plus_e = standard_qsr_rates(psi)
    q_inc = incoherent_qsr_rate(psi, sigma_c)
    return RateReport(
        q_min_std=q,
        q_plus_e_min_std=q_plus_e,
        sum_bound_slepian_wolf=slepian_wolf_sum_bound(psi),
        q_min_incoherent=q_inc,
        q_min_schumacher_incoherent=incoherent_schumacher_rate(_marginal(psi, ["C"])),
        q_min_splitting_incoherent=incoherent_splitting_rate(psi),
        classical_rate_incoherent=2.0 * q_inc,
        details={"registers": {lab: d for lab, d in psi.system.registers}},
    )


def tensor_power_state(psi: StateVector, m: int) -> StateVector:
    """m independent copies presented on the original register labels.

    Each output register is the m-fold composite of the matching input
    register, so every rate formula applies unchanged and additivity can be
    checked directly.
    """
    if m < 1:
        raise ValueError(f"copy count must be positive, got {m}")
    if m == 1:
        return psi
    labels = list(psi.system.labels)
    big = relabel_vector(psi, {lab: f"{lab}#1" for lab in labels})
    for i in range(2, m + 1):
        big = tensor_vectors(big, relabel_vector(psi, {lab: f"{lab}#{i}" for lab in labels}))
    grouped = [f"{lab}#{i}" for lab in labels for i in range(1, m + 1)]
    big = permute_vector(big, grouped)
    merged = RegisterSystem(tuple((lab, d ** m) for lab, d in psi.system.registers))
    return StateVector(merged, big.amplitudes)
