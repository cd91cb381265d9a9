"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 numerical or singularity error,
4 post-selection starvation.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .circuit import CircuitError, postselection_probability
from .pointer import (
    WEAK_RATIO,
    CouplingConfig,
    GridOverflowError,
    StarvationError,
    gaussian_pointer,
    pointer_readout,
    sample_clicks,
    weak_limit_extrapolate,
)
from .report import Report, TableRow, arm_of, base_metadata, weak_value_table
from .scenario import SCENARIO_DIR_ENV, Scenario, ScenarioError, build_tsv, load_scenario
from .tsvf import SingularWeakValueError, weak_value

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_STARVED = 0, 2, 3, 4
DEFAULT_SWEEP = (0.001, 0.002, 0.004)


class InputError(ValueError):
    pass


def _load(ref) -> Scenario:
    try:
        return load_scenario(ref)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None


def _probe(scenario: Scenario, observable: str):
    try:
        return scenario.probe(observable)
    except ScenarioError as exc:
        raise InputError(str(exc)) from None


def _rate(scenario: Scenario) -> float:
    return postselection_probability(scenario.circuit, scenario.input_state, scenario.postselect)


def _analytic_row(scenario: Scenario, observable: str, marker: str) -> TableRow:
    wv = weak_value(build_tsv(scenario, marker), scenario.probe_operator(observable))
    return TableRow(arm_of(observable), observable, wv.value)


def cmd_table(scenario_path) -> Report:
    s = _load(scenario_path)
    return Report(s.name, "table", table=weak_value_table(s), postselect_rate=_rate(s),
                  metadata=base_metadata())


def cmd_validate(scenario_path) -> Report:
    s = _load(scenario_path)
    return Report(s.name, "validate", metadata=base_metadata())


def cmd_pointer_sweep(scenario_path, observable: str, g_list=DEFAULT_SWEEP, sigma: float = 1.0) -> Report:
    s = _load(scenario_path)
    probe = _probe(s, observable)
    g_list = [float(g) for g in g_list]
    if len(set(g_list)) < 3:
        raise InputError("pointer-sweep needs at least 3 distinct --g values")
    for g in g_list:
        if not 0 < g / sigma <= WEAK_RATIO:
            raise InputError(f"g={g:g} is outside the weak regime 0 < g/sigma <= {WEAK_RATIO}")
    p0 = gaussian_pointer(sigma)
    op = s.probe_operator(observable)
    runs = [(g, pointer_readout(s, op, CouplingConfig(g, sigma), p0, probe.marker)) for g in g_list]
    return Report(s.name, "pointer-sweep", table=[_analytic_row(s, observable, probe.marker)],
                  observable=observable, pointer_runs=runs, estimate=weak_limit_extrapolate(runs),
                  postselect_rate=_rate(s), metadata=base_metadata(sigma=sigma))


def cmd_montecarlo(scenario_path, observable: str, n: int = 10**6, seed: int = 42,
                   g: float = 0.01, sigma: float = 1.0, workers: int = 1) -> Report:
    s = _load(scenario_path)
    probe = _probe(s, observable)
    if n < 1:
        raise InputError("--n must be >= 1")
    if not 0 < g / sigma:
        raise InputError("--g must be > 0")
    cfg = CouplingConfig(g, sigma)
    r = sample_clicks(s, s.probe_operator(observable), cfg, n, seed, marker=probe.marker, workers=workers)
    return Report(s.name, "montecarlo", table=[_analytic_row(s, observable, probe.marker)],
                  observable=observable, pointer_runs=[(g, r)],
                  estimate=complex(r.position_estimate, r.momentum_estimate), estimate_kind="montecarlo",
                  postselect_rate=_rate(s), metadata=base_metadata(seed=seed, sigma=sigma, n=n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cheshire",
        description="Weak values and pointer simulations for quantum Cheshire cat scenarios.",
        epilog=f"Scenario references are file paths, names in ${SCENARIO_DIR_ENV}, "
               "or shipped names (partial_cat, complete_cat).")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("scenario")
        if fmt:
            p.add_argument("--format", choices=("text", "csv", "json"), default="text")
        p.add_argument("--out", type=Path, help="write the report here instead of stdout")

    common(sub.add_parser("table", help="weak values of every probe"))
    common(sub.add_parser("validate", help="parse and check a scenario"), fmt=False)

    p = sub.add_parser("pointer-sweep", help="exact pointer readouts over g, extrapolated to g=0")
    common(p)
    p.add_argument("observable")
    p.add_argument("--g", type=float, action="append", help="coupling strength (repeatable)")
    p.add_argument("--sigma", type=float, default=1.0)

    p = sub.add_parser("montecarlo", help="sampled pointer readout")
    common(p)
    p.add_argument("observable")
    p.add_argument("--n", type=int, default=10**6, help="photons sent")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--g", type=float, default=0.01)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    return parser


def run(argv=None) -> tuple[int, str]:
    """Execute a command; returns (exit code, rendered output or error message)."""
    args = build_parser().parse_args(argv)
    try:
        if args.command == "table":
            report = cmd_table(args.scenario)
        elif args.command == "validate":
            cmd_validate(args.scenario)
            return EXIT_OK, f"{args.scenario}: ok\n"
        elif args.command == "pointer-sweep":
            report = cmd_pointer_sweep(args.scenario, args.observable, args.g or DEFAULT_SWEEP, args.sigma)
        else:
            report = cmd_montecarlo(args.scenario, args.observable, args.n, args.seed, args.g,
                                    args.sigma, args.workers)
    except (InputError, ScenarioError, CircuitError) as exc:
        return EXIT_INPUT, f"error: {exc}\n"
    except (SingularWeakValueError, GridOverflowError) as exc:
        return EXIT_NUMERIC, f"error: {exc}\n"
    except StarvationError as exc:
        return EXIT_STARVED, f"error: {exc}\n"
    text = report.render(args.format)
    if args.out:
        args.out.write_text(text)
        return EXIT_OK, ""
    return EXIT_OK, text


def main(argv=None) -> int:
    code, text = run(argv)
    (sys.stdout if code == EXIT_OK else sys.stderr).write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
