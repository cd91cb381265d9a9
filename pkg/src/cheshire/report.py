"""Reports derived from scenarios, with text, CSV and JSON renderings.

CSV layouts (column order is fixed):

* table reports:   ``scenario,arm,observable,re,im,value``
* pointer reports: ``scenario,observable,kind,g,mean_position,mean_momentum,
  postselect_prob,n_trials,n_samples,stderr,re,im``; ``kind`` is ``run`` for a
  single coupling strength, ``extrapolated`` for the g -> 0 estimate and
  ``montecarlo`` for a sampled run (whose re/im are its weak-value estimate).

JSON reports follow ``schemas/report.schema.json``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from . import __version__
from .pointer import PointerReadout
from .scenario import Scenario, build_tsv
from .tsvf import SINGULAR_TOL, weak_value

SHORT_FORM_TOL = 1e-10
TABLE_HEADER = ("scenario", "arm", "observable", "re", "im", "value")
POINTER_HEADER = ("scenario", "observable", "kind", "g", "mean_position", "mean_momentum",
                  "postselect_prob", "n_trials", "n_samples", "stderr", "re", "im")
TABLE_GRID = (("Left arm", "L"), ("Right arm", "R"))
GRID_COLUMNS = (("Sx", "Sx"), ("Sy", "Sy"), ("Sz", "Sz"), ("I", "Pi"))


def _sig(x: float) -> float:
    v = float(f"{x:.12g}")
    return 0.0 if v == 0 else v


def format_complex(z: complex) -> str:
    """``a+bi`` with 12 significant digits."""
    return f"{_sig(z.real):.12g}{_sig(z.imag):+.12g}i"


def short_complex(z: complex) -> str:
    """Exact-looking form for 0, +-1, +-i; machine form otherwise."""
    for text, target in (("0", 0), ("1", 1), ("-1", -1), ("i", 1j), ("-i", -1j)):
        if abs(z - target) <= SHORT_FORM_TOL:
            return text
    return format_complex(z)


def arm_of(observable: str) -> str:
    return observable[-1] if observable[-1] in "LR" else "-"


@dataclass(frozen=True)
class TableRow:
    arm: str
    observable: str
    value: complex

    def as_dict(self) -> dict:
        return {"arm": self.arm, "observable": self.observable, "re": _sig(self.value.real),
                "im": _sig(self.value.imag), "value": format_complex(self.value)}


@dataclass
class Report:
    scenario_name: str
    command: str
    table: list[TableRow] = field(default_factory=list)
    observable: str | None = None
    pointer_runs: list[tuple[float, PointerReadout]] = field(default_factory=list)
    estimate: complex | None = None
    estimate_kind: str = "extrapolated"
    postselect_rate: float | None = None
    metadata: dict = field(default_factory=dict)

    # ------------------------------------------------------------ renderings

    def to_json_obj(self) -> dict:
        runs = []
        for g, r in self.pointer_runs:
            runs.append({
                "g": _sig(g),
                "mean_position": _sig(r.mean_position),
                "mean_momentum": _sig(r.mean_momentum),
                "postselect_prob": _sig(r.postselect_prob),
                "position_estimate": _sig(r.position_estimate),
                "momentum_estimate": _sig(r.momentum_estimate),
                "n_trials": r.n_trials,
                "n_samples": r.n_samples,
                "stderr": None if r.stderr is None else _sig(r.stderr),
                "stderr_momentum": None if r.stderr_momentum is None else _sig(r.stderr_momentum),
            })
        est = None
        if self.estimate is not None:
            est = {"kind": self.estimate_kind, "re": _sig(self.estimate.real),
                   "im": _sig(self.estimate.imag), "value": format_complex(self.estimate)}
        return {
            "scenario": self.scenario_name,
            "command": self.command,
            "observable": self.observable,
            "table": [row.as_dict() for row in self.table],
            "pointer_runs": runs,
            "estimate": est,
            "postselect_rate": None if self.postselect_rate is None else _sig(self.postselect_rate),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.command == "table":
            w.writerow(TABLE_HEADER)
            for row in self.table:
                d = row.as_dict()
                w.writerow([self.scenario_name, row.arm, row.observable, repr(d["re"]), repr(d["im"]), d["value"]])
            return buf.getvalue()
        w.writerow(POINTER_HEADER)
        run_kind = "montecarlo" if self.estimate_kind == "montecarlo" else "run"
        for g, r in self.pointer_runs:
            re_, im = (r.position_estimate, r.momentum_estimate)
            w.writerow([self.scenario_name, self.observable, run_kind, _cell(g), _cell(r.mean_position),
                        _cell(r.mean_momentum), _cell(r.postselect_prob), _cell(r.n_trials),
                        _cell(r.n_samples), _cell(r.stderr), _cell(re_), _cell(im)])
        if self.estimate is not None and self.estimate_kind == "extrapolated":
            w.writerow([self.scenario_name, self.observable, "extrapolated", _cell(0.0), "", "", "", "", "", "",
                        _cell(self.estimate.real), _cell(self.estimate.imag)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario_name}"]
        if self.command == "table":
            lines += self._text_table()
        else:
            lines += self._text_pointer()
        return "\n".join(lines) + "\n"

    def _text_table(self) -> list[str]:
        values = {row.observable: row.value for row in self.table}
        grid_names = {f"{op}{arm}" for _, arm in TABLE_GRID for _, op in GRID_COLUMNS}
        out = []
        if grid_names <= values.keys():
            out.append(f"{'weak values':<12}" + "".join(f"{c:>8}" for c, _ in GRID_COLUMNS))
            for label, arm in TABLE_GRID:
                cells = [short_complex(values[f"{op}{arm}"]) for _, op in GRID_COLUMNS]
                out.append(f"{label:<12}" + "".join(f"{c:>8}" for c in cells))
            rest = [row for row in self.table if row.observable not in grid_names]
        else:
            rest = self.table
        out += [f"{row.observable:<12}{short_complex(row.value):>8}" for row in rest]
        return out

    def _text_pointer(self) -> list[str]:
        out = [f"observable: {self.observable}"]
        if self.table:
            out.append(f"analytic weak value: {short_complex(self.table[0].value)}")
        if self.postselect_rate is not None:
            out.append(f"post-selection rate (no coupling): {self.postselect_rate:.12g}")
        for g, r in self.pointer_runs:
            line = (f"g={g:.6g}  <x>={r.mean_position:.12g}  <p>={r.mean_momentum:.12g}  "
                    f"P(post)={r.postselect_prob:.12g}  <x>/g={r.position_estimate:.12g}")
            if r.n_samples is not None:
                line += f"  samples={r.n_samples}/{r.n_trials}  stderr(<x>/g)={r.stderr / g:.6g}"
            out.append(line)
        if self.estimate is not None:
            out.append(f"{self.estimate_kind} estimate: {format_complex(self.estimate)}")
        return out

    def render(self, fmt: str) -> str:
        return {"text": self.to_text, "csv": self.to_csv, "json": self.to_json}[fmt]()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(_sig(v))


def base_metadata(seed: int | None = None, **extra) -> dict:
    meta = {
        "tool": "cheshire",
        "version": __version__,
        "seed": seed,
        "tolerances": {"singular_denominator": SINGULAR_TOL, "short_form": SHORT_FORM_TOL},
    }
    meta.update(extra)
    return meta


def weak_value_table(scenario: Scenario) -> list[TableRow]:
    """Weak values of every probe, each at its own marker."""
    rows = []
    for probe in scenario.probes:
        tsv = build_tsv(scenario, probe.marker)
        wv = weak_value(tsv, scenario.probe_operator(probe.observable))
        rows.append(TableRow(arm_of(probe.observable), probe.observable, wv.value))
    return rows
