"""Batch command line frontend: quantities, rate reports, protocol runs, sweeps.

Every command is a thin dispatcher into the library; the only logic here is
argument handling and formatting.  Numeric output is byte-deterministic for
a fixed seed: floats are always rendered with repr and JSON keys are
sorted.

Exit codes: 0 success, 1 infinite quantity without --allow-inf, 2 input
error, 3 dimension budget exceeded, 4 violated bound or failed cross-check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from typing import Any, Callable, Sequence

import numpy as np

from . import protocols, rates
from .coherence import NotFreeOperation, dephase
from .entropy import (
    EntropicValue,
    conditional_entropy,
    conditional_mutual_information,
    hypothesis_testing_relative_entropy,
    max_relative_entropy,
    mutual_information,
    relative_entropy,
    relative_entropy_of_coherence,
    relative_entropy_variance,
    restricted_hypothesis_testing,
    von_neumann_entropy,
)
from .protocols import (
    BlockMixture,
    BoundViolation,
    BudgetExceeded,
    MAX_AMPLITUDES,
    builtin_qsr_instances,
    coherence_creation,
    convex_split_bound_check,
    qsr_decoder_p1,
    qsr_full,
    qsr_parameters,
    random_split_instance,
)
from .qmat import (
    DensityOperator,
    DimensionMismatch,
    InvalidState,
    RegisterError,
    StateVector,
    partial_trace,
    system,
)
from .sampling import haar_vector
from .stateio import StateFileError, load_density, load_state

EXIT_OK = 0
EXIT_INFINITE = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3
EXIT_BOUND = 4


class InputError(Exception):
    """Bad arguments or inputs detected at the dispatch layer."""


class InfiniteResult(Exception):
    """A requested quantity diverged and --allow-inf was not given."""


# ---------------------------------------------------------------------------
# small helpers

def _parse_parts(text: str, count: int | None = None) -> list[list[str]]:
    """Comma separates groups; '+' joins registers inside one group."""
    groups = [[r.strip() for r in g.split("+") if r.strip()] for g in text.split(",")]
    groups = [g for g in groups if g]
    if not groups:
        raise InputError(f"no register groups in {text!r}")
    if count is not None and len(groups) != count:
        raise InputError(f"expected {count} register groups, got {len(groups)} in {text!r}")
    return groups


def _parse_float_list(text: str) -> list[float]:
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if piece:
            out.append(float(piece))
    return out


def _parse_int_list(text: str) -> list[int]:
    return [int(round(v)) for v in _parse_float_list(text)]


def _random_pure_rabc(seed: int, total_qubits: int) -> StateVector:
    if total_qubits < 4:
        raise InputError(f"need at least 4 qubits for registers R, A, B, C, got {total_qubits}")
    base, rem = divmod(total_qubits, 4)
    counts = [base + (1 if i < rem else 0) for i in range(4)]
    regs = tuple((lab, 2 ** c) for lab, c in zip(("R", "A", "B", "C"), counts))
    rng = np.random.default_rng(seed)
    return StateVector(system(*regs), haar_vector(2 ** total_qubits, rng))


def _load_vector(path: str) -> StateVector:
    state = load_state(path)
    if not isinstance(state, StateVector):
        raise InputError(f"{path}: expected a pure state (amplitudes), found a density matrix")
    return state


def _entropic(value: EntropicValue | float, allow_inf: bool) -> float | str:
    if isinstance(value, EntropicValue):
        if not value.finite:
            if not allow_inf:
                raise InfiniteResult("quantity is infinite (support condition violated)")
            return "inf"
        return value.value
    return float(value)


def _render(val: float | str) -> str:
    return val if isinstance(val, str) else repr(val)


def _rows_to_text(rows: list[dict[str, Any]], header: list[str], fmt: str) -> str:
    if fmt == "json":
        payload = [{k: row[k] for k in header} for row in rows]
        return json.dumps(payload, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_render(row[k]) for k in header])
        return buf.getvalue()
    widths = [max(len(h), *(len(_render(r[h])) for r in rows)) if rows else len(h)
              for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(_render(row[h]).ljust(w) for h, w in zip(header, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _emit(args: argparse.Namespace, text: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# quantity command

def _marginal_if_parts(rho: DensityOperator, parts: str | None) -> DensityOperator:
    if parts is None:
        return rho
    (group,) = _parse_parts(parts, 1)
    return partial_trace(rho, group)


def cmd_quantity(args: argparse.Namespace) -> str:
    name = args.name
    allow_inf = args.allow_inf
    files = args.files

    def need(n: int) -> None:
        if len(files) != n:
            raise InputError(f"quantity {name} takes {n} state file(s), got {len(files)}")

    if name in ("s", "rc"):
        need(1)
        rho = _marginal_if_parts(load_density(files[0]), args.parts)
        value = von_neumann_entropy(rho) if name == "s" else relative_entropy_of_coherence(rho)
    elif name in ("mi", "ch", "cmi"):
        need(1)
        rho = load_density(files[0])
        if args.parts is None:
            raise InputError(f"quantity {name} needs --parts")
        if name == "mi":
            a, b = _parse_parts(args.parts, 2)
            value = mutual_information(rho, a, b)
        elif name == "ch":
            a, b = _parse_parts(args.parts, 2)
            value = conditional_entropy(rho, a, b)
        else:
            a, b, c = _parse_parts(args.parts, 3)
            value = conditional_mutual_information(rho, a, b, c)
    elif name in ("d", "dmax", "v", "dh", "df"):
        need(2)
        rho, sigma = load_density(files[0]), load_density(files[1])
        if name == "d":
            value = _entropic(relative_entropy(rho, sigma), allow_inf)
        elif name == "dmax":
            value = _entropic(max_relative_entropy(rho, sigma), allow_inf)
        elif name == "v":
            value = relative_entropy_variance(rho, sigma)
        else:
            if args.eps is None:
                raise InputError(f"quantity {name} needs --eps")
            fn = (hypothesis_testing_relative_entropy if name == "dh"
                  else restricted_hypothesis_testing)
            value = _entropic(fn(rho, sigma, args.eps), allow_inf)
    else:
        raise InputError(f"unknown quantity {name!r}")

    if args.format == "json":
        payload = {"quantity": name, "value": value}
        return json.dumps(payload, sort_keys=True) + "\n"
    if args.format == "csv":
        return f"quantity,value\n{name},{_render(value)}\n"
    return f"{name} = {_render(value)}\n"


# ---------------------------------------------------------------------------
# rates command

def cmd_rates(args: argparse.Namespace) -> str:
    if (args.state is None) == (args.random_qubits is None):
        raise InputError("provide exactly one of a state file or --random-qubits")
    psi = (_load_vector(args.state) if args.state is not None
           else _random_pure_rabc(args.seed, args.random_qubits))
    sigma_c = load_density(args.sigma_c) if args.sigma_c else None
    units = rates.COBIT_UNITS if args.units == "cobits" else rates.QUBIT_UNITS
    report = rates.rate_report(psi, sigma_c).in_units(units)
    if args.format == "json":
        return report.to_json_str() + "\n"
    if args.format == "csv":
        return report.to_csv_row()
    lines = [f"units: {report.units}"]
    for name, val in report.entries().items():
        lines.append(f"  {name} = {_render(val)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# simulate command

def _transcript_text(args: argparse.Namespace, transcript) -> str:
    if args.format == "json":
        return json.dumps(transcript.to_json(), sort_keys=True) + "\n"
    if args.format == "csv":
        c = transcript.to_json()["counters"]
        header = sorted(c) + ["achieved_fidelity"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerow([c[h] for h in sorted(c)] + [_render(transcript.achieved_fidelity)])
        return buf.getvalue()
    lines = []
    for i, step in enumerate(transcript.steps, 1):
        lines.append(f"step {i}: {step.description}")
    lines.append(f"qubits sent: {transcript.qubits_sent}")
    lines.append(f"cobits sent: {transcript.cobits_sent}")
    lines.append(f"singlets consumed: {transcript.singlets_consumed}")
    lines.append(f"coherent qubits out: {transcript.coherent_qubits_out}")
    lines.append(f"achieved fidelity: {_render(transcript.achieved_fidelity)}")
    for key in sorted(transcript.details):
        if key in ("rc_audit",):
            continue
        lines.append(f"{key}: {_render(transcript.details[key])}"
                     if isinstance(transcript.details[key], (int, float, str))
                     else f"{key}: {transcript.details[key]}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args: argparse.Namespace) -> str:
    target = args.target
    if target == "coherence-creation":
        t = coherence_creation(args.q, args.e, budget=args.budget)
        return _transcript_text(args, t)

    if target == "convex-split":
        if args.state is not None:
            if args.sigma is None:
                raise InputError("convex-split with a state file also needs --sigma")
            rho = load_density(args.state)
            sigma = load_density(args.sigma)
        else:
            rng = np.random.default_rng(args.seed)
            rho, sigma = random_split_instance(rng, args.k_cap)
        chk = convex_split_bound_check(rho, sigma, eps=args.eps, delta=args.delta)
        row = {"k": chk.k, "n": chk.n, "fidelity_sq": chk.fidelity_squared, "bound": chk.bound}
        return _rows_to_text([row], ["k", "n", "fidelity_sq", "bound"], args.format)

    if target == "qsr":
        instances = builtin_qsr_instances()
        if args.instance not in instances:
            raise InputError(
                f"unknown instance {args.instance!r}; available: {', '.join(sorted(instances))}"
            )
        inst = instances[args.instance]
        changes = {}
        for field_name in ("eps1", "eps2", "gamma", "n_override", "b_override"):
            val = getattr(args, field_name)
            if val is not None:
                changes[field_name] = val
        if changes:
            inst = replace(inst, **changes)
        t = qsr_full(inst, budget=args.budget)
        return _transcript_text(args, t)

    raise InputError(f"unknown simulate target {target!r}")


# ---------------------------------------------------------------------------
# sweep command

def cmd_sweep(args: argparse.Namespace) -> str:
    target = args.target
    if target == "copies":
        if (args.state is None) == (args.random_qubits is None):
            raise InputError("provide exactly one of a state file or --random-qubits")
        psi = (_load_vector(args.state) if args.state is not None
               else _random_pure_rabc(args.seed, args.random_qubits))
        if args.max_copies < 1:
            raise InputError("empty sweep: --max-copies must be at least 1")
        rows = []
        for m in range(1, args.max_copies + 1):
            if psi.system.dim ** m > args.budget:
                raise BudgetExceeded(
                    f"{m} copies need {psi.system.dim ** m} amplitudes, over {args.budget}"
                )
            rep = rates.rate_report(rates.tensor_power_state(psi, m))
            row: dict[str, Any] = {"copies": m}
            for name, val in rep.entries().items():
                row[f"{name}_per_copy"] = val / m
            rows.append(row)
        header = list(rows[0].keys())
        return _rows_to_text(rows, header, args.format)

    if target == "delta":
        deltas = _parse_float_list(args.deltas)
        if not deltas:
            raise InputError("empty sweep: no delta values given")
        if args.state is not None:
            if args.sigma is None:
                raise InputError("delta sweep with a state file also needs --sigma")
            rho = load_density(args.state)
            sigma = load_density(args.sigma)
        else:
            rng = np.random.default_rng(args.seed)
            rho, sigma = random_split_instance(rng, args.k_cap)
        rows = []
        for delta in deltas:
            chk = convex_split_bound_check(rho, sigma, eps=args.eps, delta=delta)
            rows.append({"delta": delta, "k": chk.k, "n": chk.n,
                         "fidelity_sq": chk.fidelity_squared, "bound": chk.bound})
        return _rows_to_text(rows, ["delta", "k", "n", "fidelity_sq", "bound"], args.format)

    if target == "eps":
        eps_values = _parse_float_list(args.eps_list)
        if not eps_values:
            raise InputError("empty sweep: no eps values given")
        if args.rho is None or args.sigma is None:
            raise InputError("eps sweep needs --rho and --sigma state files")
        rho, sigma = load_density(args.rho), load_density(args.sigma)
        rows = []
        for eps in eps_values:
            value = _entropic(
                hypothesis_testing_relative_entropy(rho, sigma, eps), args.allow_inf
            )
            rows.append({"eps": eps, "d_h": value})
        return _rows_to_text(rows, ["eps", "d_h"], args.format)

    if target == "block":
        b_values = _parse_int_list(args.b_list)
        if not b_values:
            raise InputError("empty sweep: no block sizes given")
        instances = builtin_qsr_instances()
        if args.instance not in instances:
            raise InputError(
                f"unknown instance {args.instance!r}; available: {', '.join(sorted(instances))}"
            )
        inst = instances[args.instance]
        params = qsr_parameters(inst)
        mixture = BlockMixture(phi=inst.psi, sigma_c=inst.sigma_c)
        rows = []
        for b in b_values:
            res = qsr_decoder_p1(mixture, b, params.pi_bc, eps2=inst.eps2,
                                 gamma=inst.gamma, d_f=params.d_f, budget=args.budget)
            rows.append({"b": b, "fidelity": res.fidelity,
                         "purified_distance": res.purified_distance,
                         "claim_bound": res.transcript.details["claim_bound"]})
        return _rows_to_text(
            rows, ["b", "fidelity", "purified_distance", "claim_bound"], args.format
        )

    raise InputError(f"unknown sweep target {target!r}")


# ---------------------------------------------------------------------------
# selftest command

def _selftest_checks(seed: int) -> list[tuple[str, bool, str]]:
    checks: list[tuple[str, bool, str]] = []

    def run(name: str, fn: Callable[[], tuple[bool, str]]) -> None:
        try:
            ok, info = fn()
        except Exception as exc:  # noqa: BLE001 - report, keep testing
            ok, info = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, ok, info))

    def ghz_cmi() -> tuple[bool, str]:
        amps = np.zeros(8, dtype=complex)
        amps[0] = amps[7] = 1.0 / math.sqrt(2.0)
        psi = StateVector(system(("R", 2), ("B", 2), ("C", 2)), amps)
        rho = psi.to_density()
        val = conditional_mutual_information(rho, "C", "R", "B")
        return abs(val - 1.0) < 1e-9, repr(val)

    def plus_rc() -> tuple[bool, str]:
        rho = DensityOperator(system(("Q", 2)), np.full((2, 2), 0.5, dtype=complex))
        val = relative_entropy_of_coherence(rho)
        return abs(val - 1.0) < 1e-9, repr(val)

    def dephase_idempotent() -> tuple[bool, str]:
        rng = np.random.default_rng(seed)
        from .sampling import random_density
        rho = random_density(system(("X", 2), ("Y", 3)), rng)
        once = dephase(rho).matrix
        twice = dephase(dephase(rho)).matrix
        gap = float(np.max(np.abs(once - twice)))
        return gap < 1e-12, repr(gap)

    def split_bound() -> tuple[bool, str]:
        rng = np.random.default_rng(seed + 1)
        rho, sigma = random_split_instance(rng, 0.5)
        chk = convex_split_bound_check(rho, sigma, eps=0.0, delta=0.25)
        return chk.fidelity_squared >= chk.bound - 1e-9, repr(chk.fidelity_squared)

    def creation() -> tuple[bool, str]:
        t = coherence_creation(2, 1)
        ok = t.coherent_qubits_out == 3 and t.achieved_fidelity >= 1.0 - 1e-9
        return ok, repr(t.achieved_fidelity)

    def redistribution() -> tuple[bool, str]:
        t = qsr_full(builtin_qsr_instances()["uncorrelated-pure"])
        d = t.details
        return d["purified_distance"] <= d["distance_bound"] + 1e-9, repr(d["purified_distance"])

    def rate_forms() -> tuple[bool, str]:
        psi = _random_pure_rabc(seed + 2, 4)
        a, b, c = rates.incoherent_rate_forms(psi)
        spread = max(a, b, c) - min(a, b, c)
        return spread < 1e-9, repr(spread)

    run("conditional mutual information on the three-party branching state", ghz_cmi)
    run("relative entropy of coherence of the flat qubit", plus_rc)
    run("dephasing is idempotent", dephase_idempotent)
    run("convex split fidelity bound", split_bound)
    run("coherence creation from two sends and one singlet", creation)
    run("redistribution end-to-end distance bound", redistribution)
    run("incoherent rate three-form agreement", rate_forms)
    return checks


def cmd_selftest(args: argparse.Namespace) -> tuple[str, int]:
    checks = _selftest_checks(args.seed)
    lines = []
    failed = 0
    for name, ok, info in checks:
        tag = "ok  " if ok else "FAIL"
        lines.append(f"{tag} {name} ({info})")
        failed += 0 if ok else 1
    lines.append(f"{len(checks) - failed} of {len(checks)} checks passed")
    return "\n".join(lines) + "\n", (EXIT_OK if failed == 0 else EXIT_BOUND)


# ---------------------------------------------------------------------------
# parser and entry point

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for any randomness")
    p.add_argument("--format", choices=("json", "csv", "pretty"), default="pretty")
    p.add_argument("--out", help="write output to this file instead of stdout")
    p.add_argument("--budget", type=int, default=MAX_AMPLITUDES,
                   help="largest state vector a run may materialize")
    p.add_argument("--allow-inf", action="store_true",
                   help="report infinite quantities instead of failing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qredist",
        description="entropic quantities, communication rates and one-shot protocol runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantity", help="evaluate one entropic quantity on state files")
    q.add_argument("name", choices=("s", "rc", "mi", "ch", "cmi", "d", "dmax", "dh", "df", "v"))
    q.add_argument("files", nargs="+", help="state files (one, or rho then sigma)")
    q.add_argument("--parts", help="register groups, comma separated, '+' joins")
    q.add_argument("--eps", type=float, help="error tolerance for dh and df")
    _add_common(q)

    r = sub.add_parser("rates", help="full closed-form rate report for one pure state")
    r.add_argument("state", nargs="?", help="pure state file on registers R, A, B, C")
    r.add_argument("--random-qubits", type=int,
                   help="draw a seeded random pure state on this many qubits instead")
    r.add_argument("--sigma-c", help="free reference state file for the product form")
    r.add_argument("--units", choices=("qubits", "cobits"), default="qubits")
    _add_common(r)

    s = sub.add_parser("simulate", help="run a protocol and print its transcript")
    s.add_argument("target", choices=("coherence-creation", "convex-split", "qsr"))
    s.add_argument("--q", type=int, default=1, help="qubit channel uses (coherence-creation)")
    s.add_argument("--e", type=int, default=1, help="singlets available (coherence-creation)")
    s.add_argument("--state", help="joint state file (convex-split)")
    s.add_argument("--sigma", help="marginal reference file (convex-split)")
    s.add_argument("--delta", type=float, default=0.25, help="overlap budget (convex-split)")
    s.add_argument("--eps", type=float, default=0.0, help="smoothing radius (convex-split)")
    s.add_argument("--k-cap", type=float, default=0.5,
                   help="correlation cap for seeded random instances (convex-split)")
    s.add_argument("--instance", default="uncorrelated-pure", help="built-in instance (qsr)")
    s.add_argument("--eps1", type=float, help="override instance eps1 (qsr)")
    s.add_argument("--eps2", type=float, help="override instance eps2 (qsr)")
    s.add_argument("--gamma", type=float, help="override instance gamma (qsr)")
    s.add_argument("--n-override", type=int, help="force the slot count (qsr)")
    s.add_argument("--b-override", type=int, help="force the block size (qsr)")
    _add_common(s)

    w = sub.add_parser("sweep", help="parameter sweeps emitting one row per value")
    w.add_argument("target", choices=("copies", "delta", "eps", "block"))
    w.add_argument("--state", help="input state file (copies, delta)")
    w.add_argument("--sigma", help="reference state file (delta, eps)")
    w.add_argument("--rho", help="tested state file (eps)")
    w.add_argument("--random-qubits", type=int, help="seeded random input (copies)")
    w.add_argument("--max-copies", type=int, default=3, help="largest copy count (copies)")
    w.add_argument("--deltas", default="0.5,0.25,0.125", help="delta values (delta)")
    w.add_argument("--eps", type=float, default=0.0, help="smoothing radius (delta)")
    w.add_argument("--k-cap", type=float, default=0.15,
                   help="correlation cap for seeded random instances (delta)")
    w.add_argument("--eps-list", default="0.05,0.1,0.25", help="eps values (eps)")
    w.add_argument("--instance", default="classical-side-info", help="built-in instance (block)")
    w.add_argument("--b-list", default="1,2,3", help="block sizes (block)")
    _add_common(w)

    t = sub.add_parser("selftest", help="run the built-in validation battery")
    _add_common(t)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "quantity":
            text = cmd_quantity(args)
        elif args.command == "rates":
            text = cmd_rates(args)
        elif args.command == "simulate":
            text = cmd_simulate(args)
        elif args.command == "sweep":
            text = cmd_sweep(args)
        else:
            text, code = cmd_selftest(args)
            _emit(args, text)
            return code
    except InfiniteResult as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFINITE
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (BoundViolation, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (InputError, StateFileError, RegisterError, DimensionMismatch,
            InvalidState, NotFreeOperation, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _emit(args, text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
