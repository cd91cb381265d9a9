"""Linear-optics circuit elements and evolution of kets forward and bras backward.

Conventions:

* BeamSplitter is the real symmetric 50:50 map (1/sqrt2)[[1, 1], [1, -1]]
  on the path factor, so (|L> + |R>)/sqrt2 leaves through the L port.
* PolarizingBeamSplitter transmits H (path unchanged) and reflects V
  (path swapped).
* HalfWavePlate at fast-axis angle t has Jones matrix
  [[cos 2t, sin 2t], [sin 2t, -cos 2t]]; the default t = pi/4 is sigma_x.
* Mirror multiplies its arm by exp(i phase).
* SingletSource only declares the preparation; as a stage it is the identity.

Element unitaries act on the system factors and as the identity on the ancilla.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .linalg import (
    ARM_PROJECTOR,
    BasisLabel,
    LabeledOperator,
    LabeledState,
    Space,
    apply,
    identity,
    inner,
    local_operator,
)

NORM_TOL = 1e-9


class ElementKind(str, enum.Enum):
    BeamSplitter = "BeamSplitter"
    HalfWavePlate = "HalfWavePlate"
    PolarizingBeamSplitter = "PolarizingBeamSplitter"
    Mirror = "Mirror"
    SingletSource = "SingletSource"
    Detector = "Detector"


# Which locations each kind accepts: "pair" means both arms L,R; "arm" a single one.
_LOCATION_SHAPE = {
    ElementKind.BeamSplitter: "pair",
    ElementKind.PolarizingBeamSplitter: "pair",
    ElementKind.HalfWavePlate: "arm",
    ElementKind.Mirror: "arm",
    ElementKind.SingletSource: "arm",
    ElementKind.Detector: "arm",
}


class CircuitError(ValueError):
    pass


class UnknownMarkerError(CircuitError, KeyError):
    pass


class UnknownDetectorError(CircuitError, KeyError):
    pass


@dataclass(frozen=True)
class CircuitElement:
    kind: ElementKind
    location: tuple[str, ...]
    params: tuple[tuple[str, object], ...] = ()

    def param(self, key: str, default=None):
        return dict(self.params).get(key, default)

    @property
    def name(self) -> str:
        return self.param("name") or f"{self.kind.value}@{','.join(self.location)}"


def _snap(x: float) -> float:
    # cos(pi/2) evaluates to 6e-17; keep exact 0 and +-1 exact
    for exact in (0.0, 1.0, -1.0):
        if abs(x - exact) < 1e-15:
            return exact
    return x


def element_unitary(e: CircuitElement, space: Space) -> LabeledOperator:
    """Unitary of one element on ``space`` (identity on untouched factors)."""
    kind = e.kind
    if kind is ElementKind.Detector:
        raise CircuitError(f"detector {e.name!r} has no unitary")
    if kind is ElementKind.SingletSource:
        return identity(space)
    if kind is ElementKind.BeamSplitter:
        bs = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
        return local_operator({"path": bs}, space)
    if kind is ElementKind.PolarizingBeamSplitter:
        swap = np.array([[0, 1], [1, 0]], dtype=complex)
        h_proj = np.diag([1, 0]).astype(complex)
        v_proj = np.diag([0, 1]).astype(complex)
        return (local_operator({"pol": h_proj}, space)
                + local_operator({"path": swap, "pol": v_proj}, space))
    (arm,) = e.location
    other = "R" if arm == "L" else "L"
    if kind is ElementKind.HalfWavePlate:
        t = float(np.real(e.param("angle", math.pi / 4)))
        c, s = _snap(math.cos(2 * t)), _snap(math.sin(2 * t))
        jones = np.array([[c, s], [s, -c]], dtype=complex)
        return (local_operator({"path": ARM_PROJECTOR[arm], "pol": jones}, space)
                + local_operator({"path": ARM_PROJECTOR[other]}, space))
    if kind is ElementKind.Mirror:
        phase = float(np.real(e.param("phase", 0.0)))
        return (local_operator({"path": ARM_PROJECTOR[arm] * np.exp(1j * phase)}, space)
                + local_operator({"path": ARM_PROJECTOR[other]}, space))
    raise CircuitError(f"unhandled element kind {kind}")


@dataclass(frozen=True)
class Circuit:
    """Ordered stages, named markers (stage positions) and named detector bras.

    A detector name containing ``&`` denotes a coincidence channel: the
    ideal projection fired by the joint click of all its parts.
    """

    space: Space
    stages: tuple[CircuitElement, ...] = ()
    markers: tuple[tuple[str, int], ...] = ()
    detectors: tuple[tuple[str, LabeledState], ...] = ()

    def __post_init__(self):
        for name, pos in self.markers:
            if not 0 <= pos <= len(self.stages):
                raise CircuitError(f"marker {name!r} at invalid position {pos}")
        for name, b in self.detectors:
            if not b.is_bra or b.space != self.space:
                raise CircuitError(f"detector {name!r} must be a bra on {self.space}")

    def marker_position(self, marker: str | None) -> int:
        if marker is None:
            return len(self.stages)
        for name, pos in self.markers:
            if name == marker:
                return pos
        raise UnknownMarkerError(f"unknown marker {marker!r}")

    def detector(self, pattern: str | Iterable[str]) -> LabeledState:
        key = pattern_key(pattern)
        for name, b in self.detectors:
            if pattern_key(name) == key:
                return b
        raise UnknownDetectorError(f"no detector for pattern {' & '.join(sorted(key))!r}")

    def unitaries(self, start: int = 0, stop: int | None = None) -> list[LabeledOperator]:
        return [element_unitary(e, self.space) for e in self.stages[start:stop]]

    def total_unitary(self) -> LabeledOperator:
        u = identity(self.space)
        for step in self.unitaries():
            u = step @ u
        return u


def pattern_key(pattern: str | Iterable[str]) -> frozenset[str]:
    if isinstance(pattern, str):
        pattern = pattern.split("&")
    key = frozenset(p.strip() for p in pattern if p.strip())
    if not key:
        raise UnknownDetectorError("empty detector pattern")
    return key


def forward_evolve(c: Circuit, input_state: LabeledState, upto_marker: str | None = None) -> LabeledState:
    """Ket after the stages preceding ``upto_marker`` (all stages if None)."""
    if input_state.is_bra:
        raise CircuitError("forward evolution needs a ket")
    s = input_state
    for u in c.unitaries(0, c.marker_position(upto_marker)):
        s = apply(u, s)
    return s


def backward_evolve(c: Circuit, detector: str | Iterable[str], upto_marker: str | None = None) -> LabeledState:
    """Detector bra pulled back through the stages after ``upto_marker``."""
    b = c.detector(detector)
    pos = c.marker_position(upto_marker)
    for u in reversed(c.unitaries(pos)):
        b = apply(u, b)
    return b


def transition_amplitude(c: Circuit, input_state: LabeledState, detector) -> complex:
    return inner(c.detector(detector), apply(c.total_unitary(), input_state))


def postselection_probability(c: Circuit, input_state: LabeledState, detector) -> float:
    """Probability that the detector pattern fires for a normalized input."""
    n = input_state.norm()
    if abs(n - 1) > NORM_TOL:
        raise CircuitError(f"input state not normalized (norm {n:.12g})")
    return abs(transition_amplitude(c, input_state, detector)) ** 2


def singlet_state(mode: str, space: Space) -> LabeledState:
    """|mode> (x) (|H>_S|V>_A - |V>_S|H>_A)/sqrt2."""
    if not space.has_ancilla:
        raise CircuitError("a singlet source needs an ancilla factor")
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.index(BasisLabel(mode, "H", "V"))] = 1 / math.sqrt(2)
    amps[space.index(BasisLabel(mode, "V", "H"))] = -1 / math.sqrt(2)
    return LabeledState(space, amps, "ket")
