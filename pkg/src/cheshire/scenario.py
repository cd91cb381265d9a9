"""Line-oriented scenario files: parsing, validation and serialization.

Grammar (one directive per line, ``#`` starts a comment)::

    space path=L,R pol=H,V [ancilla=H,V]
    input <ket-expr>
    element <kind> <L|R|L,R> [key=value ...]
    marker <name>
    detector <name> <ket-expr>       # the detector projects onto the dual
    postselect <name> [& <name> ...]
    probe <observable> [@<marker>]

State expressions combine the basis symbols ``L R H V H_A V_A`` with
``+ - * /``, the tensor sign ``(x)`` (juxtaposition also tensors),
numbers, ``i``, ``pi``, ``sqrt2`` and ``sqrt(<expr>)``.  A detector named
``D1&D2`` is the coincidence channel selected by ``postselect D1 & D2``.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .circuit import (
    _LOCATION_SHAPE,
    Circuit,
    CircuitElement,
    ElementKind,
    backward_evolve,
    forward_evolve,
    pattern_key,
    singlet_state,
)
from .linalg import (
    FACTOR_ORDER,
    FACTOR_VALUES,
    OBSERVABLES,
    LabeledOperator,
    LabeledState,
    Space,
    basis_ket,
    observable,
    phase_aligned_distance,
    tensor,
)
from .tsvf import TwoStateVector, contract_ancilla, superpose

SCENARIO_DIR_ENV = "CHESHIRE_SCENARIO_DIR"
SCENARIO_SUFFIX = ".scn"
NORM_TOL = 1e-9

BASIS_SYMBOLS = {
    "L": ("path", "L"),
    "R": ("path", "R"),
    "H": ("pol", "H"),
    "V": ("pol", "V"),
    "H_A": ("ancilla", "H"),
    "V_A": ("ancilla", "V"),
}


class ScenarioError(ValueError):
    pass


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, message: str, line: int, column: int, token: str | None = None):
        self.line, self.column, self.token = line, column, token
        super().__init__(f"line {line}, column {column}: {message}")


class ScenarioSemanticError(ScenarioError):
    def __init__(self, message: str, subject: str | None = None, line: int | None = None):
        self.subject, self.line = subject, line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


# ---------------------------------------------------------------- expressions

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<tensor>\(x\))
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/()])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ScenarioSyntaxError(f"unexpected character {text[pos]!r}", line, col0 + pos, text[pos])
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), col0 + pos))
        pos = m.end()
    toks.append(_Tok("end", "", col0 + len(text)))
    return toks


class _ExprParser:
    """Recursive descent over amplitude/state expressions.

    Values are complex scalars or ``LabeledState`` kets.
    """

    def __init__(self, text: str, line: int, col0: int):
        self.toks = _tokenize(text, line, col0)
        self.i = 0
        self.line = line

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return ScenarioSyntaxError(msg, self.line, tok.col, tok.text or None)

    def parse(self):
        if self.tok.kind == "end":
            raise self.error("empty expression")
        v = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}")
        return v

    def expr(self):
        v = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok
            self.i += 1
            rhs = self.term()
            v = self._add(v, rhs if op.text == "+" else _neg(rhs), op)
        return v

    def term(self):
        v = self.unary()
        while True:
            t = self.tok
            if t.kind == "tensor" or (t.kind == "op" and t.text == "*"):
                self.i += 1
                v = self._mul(v, self.unary(), t)
            elif t.kind == "op" and t.text == "/":
                self.i += 1
                rhs = self.unary()
                if isinstance(rhs, LabeledState):
                    raise self.error("cannot divide by a state", t)
                if rhs == 0:
                    raise self.error("division by zero", t)
                v = v / rhs
            elif t.kind in ("number", "ident") or (t.kind == "op" and t.text == "("):
                v = self._mul(v, self.unary(), t)
            else:
                return v

    def unary(self):
        t = self.tok
        if t.kind == "op" and t.text in ("-", "+"):
            self.i += 1
            v = self.unary()
            return _neg(v) if t.text == "-" else v
        return self.atom()

    def atom(self):
        t = self.tok
        self.i += 1
        if t.kind == "number":
            return complex(float(t.text))
        if t.kind == "op" and t.text == "(":
            v = self.expr()
            self._expect(")")
            return v
        if t.kind == "ident":
            if t.text in BASIS_SYMBOLS:
                factor, value = BASIS_SYMBOLS[t.text]
                return basis_ket(**{factor: value})
            if t.text == "i":
                return 1j
            if t.text == "pi":
                return complex(math.pi)
            if t.text == "sqrt2":
                return complex(math.sqrt(2))
            if t.text == "sqrt":
                self._expect("(")
                v = self.expr()
                self._expect(")")
                if isinstance(v, LabeledState):
                    raise self.error("sqrt of a state", t)
                return complex(np.sqrt(v))
            raise self.error(f"unknown symbol {t.text!r}", t)
        raise self.error(f"unexpected token {t.text!r}" if t.text else "unexpected end of expression", t)

    def _expect(self, text: str):
        if self.tok.text != text:
            raise self.error(f"expected {text!r}")
        self.i += 1

    def _mul(self, a, b, t):
        a_state, b_state = isinstance(a, LabeledState), isinstance(b, LabeledState)
        if a_state and b_state:
            try:
                return tensor(a, b)
            except ValueError as exc:
                raise self.error(str(exc), t) from None
        if t.kind == "tensor":
            raise self.error("(x) needs states on both sides", t)
        return a * b

    def _add(self, a, b, t):
        if isinstance(a, LabeledState) != isinstance(b, LabeledState):
            raise self.error("cannot add a scalar and a state", t)
        if isinstance(a, LabeledState) and a.space != b.space:
            raise self.error(f"cannot add states on {a.space} and {b.space}", t)
        return a + b


def _neg(v):
    return -v


def parse_expression(text: str, line: int = 1, col0: int = 1):
    """Evaluate one expression to a complex scalar or a ket."""
    return _ExprParser(text, line, col0).parse()


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True)
class Probe:
    observable: str
    marker: str


@dataclass(frozen=True)
class Scenario:
    name: str
    circuit: Circuit
    input_state: LabeledState
    postselect: tuple[str, ...]
    probes: tuple[Probe, ...] = ()

    @property
    def space(self) -> Space:
        return self.circuit.space

    @property
    def system_space(self) -> Space:
        return self.space.without("ancilla")

    @property
    def is_coincidence(self) -> bool:
        return len(self.postselect) > 1

    def probe_operator(self, name: str) -> LabeledOperator:
        return observable(name, self.system_space)

    def default_marker(self) -> str:
        markers = [m for m, _ in self.circuit.markers]
        if len(markers) != 1:
            raise ScenarioSemanticError("scenario needs exactly one marker or an explicit @marker")
        return markers[0]

    def probe(self, name: str) -> Probe:
        for p in self.probes:
            if p.observable == name:
                return p
        raise ScenarioSemanticError(f"observable {name!r} is not probed by scenario {self.name!r}", name)

    def pre_post(self, marker: str | None = None) -> tuple[LabeledState, LabeledState]:
        """Forward-evolved ket and backward-evolved bra at the marker, full space."""
        marker = marker or self.default_marker()
        return (forward_evolve(self.circuit, self.input_state, marker),
                backward_evolve(self.circuit, self.postselect, marker))


def build_tsv(scenario: Scenario, marker: str | None = None) -> TwoStateVector:
    """Two-state vector at a marker; the ancilla, if any, is contracted away."""
    pre, post = scenario.pre_post(marker)
    if scenario.space.has_ancilla:
        return contract_ancilla(pre, post)
    return superpose([(post, pre, 1)])


def build_entangled_tsv(scenario: Scenario, marker: str | None = None) -> TwoStateVector:
    """Entangled pre/post selection from an ancilla circuit with a coincidence post-selection."""
    if not scenario.space.has_ancilla:
        raise ScenarioSemanticError("entangled pre/post selection needs an ancilla factor in `space`", "space")
    if not scenario.is_coincidence:
        raise ScenarioSemanticError("entangled pre/post selection needs a coincidence postselect (A & B)",
                                    "postselect")
    return build_tsv(scenario, marker)


# ---------------------------------------------------------------- parsing

def _strip_comment(raw: str) -> str:
    idx = raw.find("#")
    return raw if idx < 0 else raw[:idx]


def _split_words(text: str, col0: int) -> list[tuple[str, int]]:
    return [(m.group(), col0 + m.start()) for m in re.finditer(r"\S+", text)]


def parse_scenario(text: bytes | str, name: str = "scenario") -> Scenario:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScenarioSyntaxError(f"not UTF-8: {exc.reason}", 1, 1) from None
    return _Builder(name).run(text)


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.space: Space | None = None
        self.input: LabeledState | None = None
        self.input_line = None
        self.stages: list[CircuitElement] = []
        self.stage_lines: list[int] = []
        self.markers: list[tuple[str, int]] = []
        self.detectors: list[tuple[str, LabeledState]] = []
        self.detector_lines: dict[str, int] = {}
        self.postselect: tuple[str, ...] | None = None
        self.postselect_line = None
        self.probes: list[tuple[str, str | None, int]] = []

    def run(self, text: str) -> Scenario:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body = _strip_comment(raw)
            words = _split_words(body, 1)
            if not words:
                continue
            directive, col = words[0]
            handler = getattr(self, f"_d_{directive}", None)
            if handler is None:
                raise ScenarioSyntaxError(f"unknown directive {directive!r}", lineno, col, directive)
            rest_col = col + len(directive)
            handler(body[rest_col - 1:], words[1:], lineno, rest_col)
        return self._finish()

    def _need_space(self, lineno: int, directive: str):
        if self.space is None:
            raise ScenarioSemanticError(f"`{directive}` before `space`", directive, lineno)

    def _d_space(self, rest, words, lineno, col):
        if self.space is not None:
            raise ScenarioSemanticError("duplicate `space` declaration", "space", lineno)
        factors = []
        for word, wcol in words:
            key, sep, vals = word.partition("=")
            if not sep or key not in FACTOR_ORDER:
                raise ScenarioSyntaxError(f"bad space factor {word!r}", lineno, wcol, word)
            if tuple(vals.split(",")) != FACTOR_VALUES[key]:
                raise ScenarioSemanticError(
                    f"factor {key} must be {','.join(FACTOR_VALUES[key])}, got {vals}", key, lineno)
            factors.append(key)
        if "path" not in factors or "pol" not in factors:
            raise ScenarioSemanticError("space needs both path and pol", "space", lineno)
        self.space = Space(tuple(factors))

    def _state(self, rest, lineno, col, what) -> LabeledState:
        value = parse_expression(rest, lineno, col)
        if not isinstance(value, LabeledState):
            raise ScenarioSemanticError(f"{what} is a scalar, not a state", what, lineno)
        if value.space != self.space:
            raise ScenarioSemanticError(f"{what} lives on {value.space}, declared space is {self.space}",
                                        what, lineno)
        return value

    def _d_input(self, rest, words, lineno, col):
        self._need_space(lineno, "input")
        if self.input is not None:
            raise ScenarioSemanticError("duplicate `input`", "input", lineno)
        self.input = self._state(rest, lineno, col, "input")
        self.input_line = lineno
        if abs(self.input.norm() - 1) > NORM_TOL:
            raise ScenarioSemanticError(f"input is not normalized (norm {self.input.norm():.12g})",
                                        "input", lineno)

    def _d_element(self, rest, words, lineno, col):
        self._need_space(lineno, "element")
        if len(words) < 2:
            raise ScenarioSyntaxError("element needs a kind and a location", lineno, col)
        (kind_text, kcol), (loc_text, _) = words[0], words[1]
        try:
            kind = ElementKind(kind_text)
        except ValueError:
            raise ScenarioSyntaxError(f"unknown element kind {kind_text!r}", lineno, kcol, kind_text) from None
        params = []
        for word, wcol in words[2:]:
            key, sep, val = word.partition("=")
            if not sep or not key:
                raise ScenarioSyntaxError(f"bad parameter {word!r}", lineno, wcol, word)
            if key == "name":
                params.append((key, val))
                continue
            v = parse_expression(val, lineno, wcol + len(key) + 1)
            if isinstance(v, LabeledState):
                raise ScenarioSemanticError(f"parameter {key} must be a number", kind_text, lineno)
            params.append((key, v.real if v.imag == 0 else v))
        elem_name = dict(params).get("name") or kind_text
        location = tuple(loc_text.split(","))
        arms = FACTOR_VALUES["path"]
        if any(a not in arms for a in location) or len(set(location)) != len(location):
            raise ScenarioSemanticError(f"{elem_name}: unknown arm {loc_text!r}", elem_name, lineno)
        shape = _LOCATION_SHAPE[kind]
        if shape == "pair" and set(location) != set(arms):
            raise ScenarioSemanticError(f"{elem_name}: {kind_text} spans both arms (L,R)", elem_name, lineno)
        if shape == "arm" and len(location) != 1:
            raise ScenarioSemanticError(f"{elem_name}: {kind_text} sits in a single arm", elem_name, lineno)
        if kind is ElementKind.Detector:
            raise ScenarioSemanticError(f"{elem_name}: declare detectors with `detector`", elem_name, lineno)
        self.stages.append(CircuitElement(kind, location, tuple(params)))
        self.stage_lines.append(lineno)

    def _d_marker(self, rest, words, lineno, col):
        if len(words) != 1:
            raise ScenarioSyntaxError("marker takes one name", lineno, col)
        name = words[0][0]
        if any(m == name for m, _ in self.markers):
            raise ScenarioSemanticError(f"duplicate marker {name!r}", name, lineno)
        self.markers.append((name, len(self.stages)))

    def _d_detector(self, rest, words, lineno, col):
        self._need_space(lineno, "detector")
        if len(words) < 2:
            raise ScenarioSyntaxError("detector needs a name and a state", lineno, col)
        name, ncol = words[0]
        key = pattern_key(name)
        if any(pattern_key(n) == key for n, _ in self.detectors):
            raise ScenarioSemanticError(f"duplicate detector {name!r}", name, lineno)
        expr_col = ncol + len(name)
        state = self._state(rest[expr_col - col:], lineno, expr_col, f"detector {name}")
        if abs(state.norm() - 1) > NORM_TOL:
            raise ScenarioSemanticError(f"detector {name} is not a normalized projection", name, lineno)
        self.detectors.append((name, state.dual()))
        self.detector_lines[name] = lineno

    def _d_postselect(self, rest, words, lineno, col):
        if self.postselect is not None:
            raise ScenarioSemanticError("duplicate `postselect`", "postselect", lineno)
        names = [n.strip() for n in rest.split("&")]
        if not all(names) or any(re.search(r"\s", n) for n in names):
            raise ScenarioSyntaxError("postselect expects NAME [& NAME ...]", lineno, col)
        self.postselect = tuple(sorted(names))
        self.postselect_line = lineno

    def _d_probe(self, rest, words, lineno, col):
        if not 1 <= len(words) <= 2:
            raise ScenarioSyntaxError("probe takes an observable and an optional @marker", lineno, col)
        obs, ocol = words[0]
        if obs not in OBSERVABLES:
            raise ScenarioSyntaxError(f"unknown observable {obs!r}", lineno, ocol, obs)
        marker = None
        if len(words) == 2:
            m, mcol = words[1]
            if not m.startswith("@") or len(m) == 1:
                raise ScenarioSyntaxError(f"expected @marker, got {m!r}", lineno, mcol, m)
            marker = m[1:]
        if any(p[0] == obs for p in self.probes):
            raise ScenarioSemanticError(f"duplicate probe {obs!r}", obs, lineno)
        self.probes.append((obs, marker, lineno))

    def _finish(self) -> Scenario:
        if self.space is None:
            raise ScenarioSemanticError("missing `space` declaration", "space")
        sources = [(i, e) for i, e in enumerate(self.stages) if e.kind is ElementKind.SingletSource]
        if sources:
            i, src = sources[0]
            if len(sources) > 1 or i != 0:
                raise ScenarioSemanticError(f"{src.name}: a singlet source must be the single first element",
                                            src.name, self.stage_lines[i])
            try:
                prepared = singlet_state(src.location[0], self.space)
            except ValueError as exc:
                raise ScenarioSemanticError(f"{src.name}: {exc}", src.name, self.stage_lines[i]) from None
            if self.input is None:
                self.input = prepared
            elif phase_aligned_distance(self.input, prepared) > 1e-12:
                raise ScenarioSemanticError(f"{src.name}: `input` disagrees with the singlet source",
                                            src.name, self.input_line)
        if self.input is None:
            raise ScenarioSemanticError("missing `input` (or SingletSource)", "input")
        circuit = Circuit(self.space, tuple(self.stages), tuple(self.markers), tuple(self.detectors))
        if self.postselect is None:
            raise ScenarioSemanticError("missing `postselect`", "postselect")
        try:
            circuit.detector(self.postselect)
        except KeyError:
            raise ScenarioSemanticError(f"postselect names unknown detector pattern {' & '.join(self.postselect)!r}",
                                        "postselect", self.postselect_line) from None
        marker_names = [m for m, _ in self.markers]
        probes = []
        for obs, marker, lineno in self.probes:
            if marker is None:
                if len(marker_names) != 1:
                    raise ScenarioSemanticError(f"probe {obs} needs @marker (scenario has {len(marker_names)} markers)",
                                                obs, lineno)
                marker = marker_names[0]
            elif marker not in marker_names:
                raise ScenarioSemanticError(f"probe {obs} refers to unknown marker {marker!r}", obs, lineno)
            probes.append(Probe(obs, marker))
        return Scenario(self.name, circuit, self.input, self.postselect, tuple(probes))


# ---------------------------------------------------------------- serialization

def _format_coefficient(c: complex) -> str:
    re_, im = c.real, c.imag
    if im == 0:
        return repr(re_)
    if re_ == 0:
        return f"{im!r} i"
    return f"({re_!r} + {im!r} i)"


def format_state(s: LabeledState) -> str:
    """Expression for a ket, or for the ket dual to a bra."""
    amps = s.amplitudes.conj() if s.is_bra else s.amplitudes
    terms = []
    for lab, a in zip(s.space.labels, amps):
        if a == 0:
            continue
        symbols = [getattr(lab, f) + ("_A" if f == "ancilla" else "") for f in s.space.factors]
        terms.append(f"{_format_coefficient(complex(a))} " + " (x) ".join(symbols))
    return " + ".join(terms) if terms else "0"


def _format_param(key, value) -> str:
    if key == "name":
        return f"name={value}"
    if isinstance(value, complex):
        return f"{key}=({value.real!r}+{value.imag!r}*i)"
    return f"{key}={value!r}"


def serialize_scenario(s: Scenario) -> str:
    c = s.circuit
    space = " ".join(f"{f}={','.join(FACTOR_VALUES[f])}" for f in c.space.factors)
    out = [f"# scenario {s.name}", f"space {space}", f"input {format_state(s.input_state)}"]
    for pos in range(len(c.stages) + 1):
        out.extend(f"marker {name}" for name, p in c.markers if p == pos)
        if pos < len(c.stages):
            e = c.stages[pos]
            params = "".join(" " + _format_param(k, v) for k, v in e.params)
            out.append(f"element {e.kind.value} {','.join(e.location)}{params}")
    out.extend(f"detector {name} {format_state(b)}" for name, b in c.detectors)
    out.append(f"postselect {' & '.join(s.postselect)}")
    out.extend(f"probe {p.observable} @{p.marker}" for p in s.probes)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- loading

def shipped_scenarios() -> list[str]:
    root = resources.files("cheshire") / "scenarios"
    return sorted(p.name[:-len(SCENARIO_SUFFIX)] for p in root.iterdir() if p.name.endswith(SCENARIO_SUFFIX))


def resolve_scenario_path(ref: str | os.PathLike) -> Path:
    """Find a scenario file: literal path, then $CHESHIRE_SCENARIO_DIR, then the shipped corpus."""
    ref = Path(ref)
    candidates = [ref, ref.with_name(ref.name + SCENARIO_SUFFIX)]
    env_dir = os.environ.get(SCENARIO_DIR_ENV)
    if env_dir and not ref.is_absolute():
        candidates += [Path(env_dir) / ref, Path(env_dir) / (str(ref) + SCENARIO_SUFFIX)]
    shipped = resources.files("cheshire") / "scenarios" / (ref.stem + SCENARIO_SUFFIX)
    for cand in candidates:
        if cand.is_file():
            return cand
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"scenario {str(ref)!r} not found")


def load_scenario(ref: str | os.PathLike) -> Scenario:
    path = resolve_scenario_path(ref)
    name = path.name[:-len(SCENARIO_SUFFIX)] if path.name.endswith(SCENARIO_SUFFIX) else path.name
    return parse_scenario(path.read_bytes(), name=name)
