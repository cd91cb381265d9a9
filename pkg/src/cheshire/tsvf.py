"""Weak values on pre- and post-selected states, including superpositions of them."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

from .linalg import (
    FACTOR_VALUES,
    BasisLabel,
    KindMismatchError,
    LabeledOperator,
    LabeledState,
    SpaceMismatchError,
    apply,
    inner,
)

SINGULAR_TOL = 1e-10


class SingularWeakValueError(ArithmeticError):
    """The pre/post overlap vanishes, so no weak value is defined."""

    def __init__(self, denominator: complex):
        self.denominator = denominator
        super().__init__(f"weak value undefined: |<post|pre>| = {abs(denominator):.3e}")


class Term(NamedTuple):
    bra: LabeledState
    ket: LabeledState
    weight: complex = 1.0


@dataclass(frozen=True)
class TwoStateVector:
    """Weighted sum of (bra, ket) pairs; a single pair is the ordinary case."""

    terms: tuple[Term, ...]

    @property
    def space(self):
        return self.terms[0].ket.space

    @cached_property
    def denominator(self) -> complex:
        return sum((t.weight * inner(t.bra, t.ket) for t in self.terms), 0j)

    def is_singular(self, tol: float = SINGULAR_TOL) -> bool:
        return abs(self.denominator) < tol

    def transition(self, op: LabeledOperator) -> complex:
        """sum_k w_k <bra_k| A |ket_k>."""
        if op.space != self.space:
            raise SpaceMismatchError(f"operator on {op.space}, states on {self.space}")
        return sum((t.weight * inner(t.bra, apply(op, t.ket)) for t in self.terms), 0j)

    def scaled(self, c: complex) -> "TwoStateVector":
        return TwoStateVector(tuple(Term(t.bra, t.ket, t.weight * c) for t in self.terms))

    def operator_form(self) -> np.ndarray:
        """sum_k w_k |ket_k><bra_k| as a matrix; weak values are tr(A rho)/tr(rho)."""
        return sum(t.weight * np.outer(t.ket.amplitudes, t.bra.amplitudes) for t in self.terms)


@dataclass(frozen=True)
class WeakValueResult:
    value: complex
    denominator: complex


def superpose(terms: Iterable) -> TwoStateVector:
    """Build a two-state vector from (bra, ket) or (bra, ket, weight) tuples.

    Terms are stored as given; nothing is normalized.
    """
    built = []
    for t in terms:
        bra_, ket_, *rest = t
        built.append(Term(bra_, ket_, complex(rest[0]) if rest else 1.0 + 0j))
    if not built:
        raise ValueError("a two-state vector needs at least one term")
    space = built[0].ket.space
    for t in built:
        if not t.bra.is_bra or t.ket.is_bra:
            raise KindMismatchError("each term must be (bra, ket, weight)")
        if t.bra.space != space or t.ket.space != space:
            raise SpaceMismatchError(f"inconsistent term spaces: {t.bra.space}, {t.ket.space} vs {space}")
    return TwoStateVector(tuple(built))


def weak_value(tsv: TwoStateVector, op: LabeledOperator,
               tol: float = SINGULAR_TOL) -> WeakValueResult:
    d = tsv.denominator
    num = tsv.transition(op)
    if abs(d) < tol:
        raise SingularWeakValueError(d)
    return WeakValueResult(num / d, d)


def flip_polarization(s: LabeledState) -> LabeledState:
    """Swap H and V on the system polarization factor, leaving other labels alone."""
    if "pol" not in s.space.factors:
        raise SpaceMismatchError(f"no polarization factor in {s.space}")
    swap = {"H": "V", "V": "H"}
    amps = [s.amplitude(lab._replace(pol=swap[lab.pol])) for lab in s.space.labels]
    return LabeledState(s.space, amps, s.kind)


def ancilla_component(s: LabeledState, value: str) -> LabeledState:
    """System-space slice of a state at a fixed ancilla basis value."""
    if not s.space.has_ancilla:
        raise SpaceMismatchError(f"{s.space} has no ancilla factor")
    sys_space = s.space.without("ancilla")
    amps = [s.amplitude(BasisLabel(lab.path, lab.pol, value)) for lab in sys_space.labels]
    return LabeledState(sys_space, amps, s.kind)


def contract_ancilla(pre_full: LabeledState, post_full: LabeledState) -> TwoStateVector:
    """Trace the ancilla out of a pre/post pair, giving one term per ancilla value.

    Terms where either side vanishes are dropped since they contribute
    nothing to any weak value.
    """
    if pre_full.is_bra or not post_full.is_bra:
        raise KindMismatchError("contract_ancilla expects (ket, bra)")
    if not (pre_full.space.has_ancilla and post_full.space.has_ancilla):
        raise SpaceMismatchError("both states must carry an ancilla factor")
    if pre_full.space != post_full.space:
        raise SpaceMismatchError(f"{pre_full.space} vs {post_full.space}")
    terms = []
    for a in FACTOR_VALUES["ancilla"]:
        b, k = ancilla_component(post_full, a), ancilla_component(pre_full, a)
        if not (b.is_zero() or k.is_zero()):
            terms.append((b, k, 1.0))
    if not terms:
        raise SingularWeakValueError(0j)
    return superpose(terms)
