"""Dense complex linear algebra over small labeled tensor-product bases.

A state space is a product of two-level factors drawn from ``ancilla``,
``path`` and ``pol``.  Basis labels are enumerated in a fixed canonical
order with the ancilla slowest and the polarization fastest, so the
system space reads (L,H), (L,V), (R,H), (R,V).

Bras store their amplitudes already conjugated: ``<phi| = sum_j c_j <j|``
is held as the coefficient array ``c``.  Inner products are therefore a
plain bilinear sum, and ``dual`` conjugates exactly once.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

TOL = 1e-12

FACTOR_ORDER = ("ancilla", "path", "pol")
FACTOR_VALUES = {
    "ancilla": ("H", "V"),
    "path": ("L", "R"),
    "pol": ("H", "V"),
}


class SpaceMismatchError(ValueError):
    """Raised when two objects live on different labeled spaces."""


class KindMismatchError(ValueError):
    """Raised when a bra is used where a ket is expected or vice versa."""


class BasisLabel(NamedTuple):
    path: str | None = None
    pol: str | None = None
    ancilla: str | None = None

    def restrict(self, factors: Iterable[str]) -> "BasisLabel":
        return BasisLabel(**{f: getattr(self, f) for f in factors})

    def __str__(self) -> str:
        parts = [getattr(self, f) + ("_A" if f == "ancilla" else "")
                 for f in FACTOR_ORDER if getattr(self, f) is not None]
        return ",".join(parts)


@dataclass(frozen=True)
class Space:
    """Product of two-level factors, kept in canonical order."""

    factors: tuple[str, ...]

    def __post_init__(self):
        unknown = set(self.factors) - set(FACTOR_ORDER)
        if unknown:
            raise ValueError(f"unknown factor(s) {sorted(unknown)}")
        if len(set(self.factors)) != len(self.factors):
            raise ValueError(f"repeated factor in {self.factors}")
        ordered = tuple(f for f in FACTOR_ORDER if f in self.factors)
        object.__setattr__(self, "factors", ordered)

    @classmethod
    def of(cls, *factors: str) -> "Space":
        return cls(tuple(factors))

    @property
    def dim(self) -> int:
        return 2 ** len(self.factors)

    @property
    def has_ancilla(self) -> bool:
        return "ancilla" in self.factors

    @property
    def labels(self) -> tuple[BasisLabel, ...]:
        values = [FACTOR_VALUES[f] for f in self.factors]
        return tuple(BasisLabel(**dict(zip(self.factors, combo)))
                     for combo in itertools.product(*values))

    def index(self, label: BasisLabel) -> int:
        idx = 0
        for f in self.factors:
            v = getattr(label, f)
            if v is None:
                raise KeyError(f"label {label!r} lacks factor {f!r}")
            idx = 2 * idx + FACTOR_VALUES[f].index(v)
        return idx

    def without(self, factor: str) -> "Space":
        return Space(tuple(f for f in self.factors if f != factor))

    def __str__(self) -> str:
        return "(x)".join(self.factors) or "scalar"


SYSTEM = Space.of("path", "pol")
FULL = Space.of("ancilla", "path", "pol")
PATH = Space.of("path")
POL = Space.of("pol")
ANCILLA = Space.of("ancilla")


def _frozen_array(values, dim: int | None = None, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("amplitudes must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledState:
    """Ket or bra over a labeled space.  Normalization is not enforced."""

    space: Space
    amplitudes: np.ndarray
    kind: str = "ket"

    def __post_init__(self):
        if self.kind not in ("ket", "bra"):
            raise ValueError(f"kind must be 'ket' or 'bra', got {self.kind!r}")
        object.__setattr__(self, "amplitudes",
                           _frozen_array(self.amplitudes, shape=(self.space.dim,)))

    @property
    def is_bra(self) -> bool:
        return self.kind == "bra"

    def amplitude(self, label: BasisLabel) -> complex:
        return complex(self.amplitudes[self.space.index(label)])

    def as_dict(self) -> dict[BasisLabel, complex]:
        return {lab: complex(a) for lab, a in zip(self.space.labels, self.amplitudes)}

    def dual(self) -> "LabeledState":
        other = "bra" if self.kind == "ket" else "ket"
        return LabeledState(self.space, self.amplitudes.conj(), other)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "LabeledState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return self._with(self.amplitudes / n)

    def is_zero(self, tol: float = TOL) -> bool:
        return bool(np.max(np.abs(self.amplitudes), initial=0.0) <= tol)

    def _with(self, amps) -> "LabeledState":
        return LabeledState(self.space, amps, self.kind)

    def _check_compatible(self, other: "LabeledState"):
        if not isinstance(other, LabeledState):
            return NotImplemented
        if other.space != self.space:
            raise SpaceMismatchError(f"{self.space} vs {other.space}")
        if other.kind != self.kind:
            raise KindMismatchError(f"cannot combine {self.kind} with {other.kind}")

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self._with(self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self._with(self.amplitudes - other.amplitudes)

    def __neg__(self):
        return self._with(-self.amplitudes)

    def __mul__(self, c):
        if isinstance(c, (int, float, complex, np.number)):
            return self._with(self.amplitudes * c)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, (int, float, complex, np.number)):
            return self._with(self.amplitudes / c)
        return NotImplemented

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledState):
            return NotImplemented
        return (self.space == other.space and self.kind == other.kind
                and np.array_equal(self.amplitudes, other.amplitudes))

    def allclose(self, other: "LabeledState", tol: float = TOL) -> bool:
        return (self.space == other.space and self.kind == other.kind
                and bool(np.max(np.abs(self.amplitudes - other.amplitudes)) <= tol))

    def __repr__(self) -> str:
        terms = [f"{complex(a):.6g}|{lab}>" for lab, a in zip(self.space.labels, self.amplitudes)
                 if abs(a) > TOL]
        body = " + ".join(terms) or "0"
        return f"LabeledState({self.kind}: {body})"


def ket(space: Space, amplitudes) -> LabeledState:
    return LabeledState(space, amplitudes, "ket")


def bra(space: Space, amplitudes) -> LabeledState:
    """Bra with the given (already conjugated) coefficients."""
    return LabeledState(space, amplitudes, "bra")


def basis_ket(**components: str) -> LabeledState:
    """Basis ket on exactly the named factors, e.g. ``basis_ket(path="L", pol="H")``."""
    space = Space(tuple(components))
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.index(BasisLabel(**components))] = 1.0
    return ket(space, amps)


def tensor(a: LabeledState, b: LabeledState) -> LabeledState:
    """Tensor product of states on disjoint factors, in canonical order."""
    if a.kind != b.kind:
        raise KindMismatchError(f"cannot tensor a {a.kind} with a {b.kind}")
    overlap = set(a.space.factors) & set(b.space.factors)
    if overlap:
        raise SpaceMismatchError(f"overlapping factors {sorted(overlap)}")
    space = Space(a.space.factors + b.space.factors)
    amps = [a.amplitude(lab.restrict(a.space.factors)) * b.amplitude(lab.restrict(b.space.factors))
            for lab in space.labels]
    return LabeledState(space, amps, a.kind)


def inner(bra_: LabeledState, ket_: LabeledState) -> complex:
    if not bra_.is_bra or ket_.is_bra:
        raise KindMismatchError("inner expects (bra, ket)")
    if bra_.space != ket_.space:
        raise SpaceMismatchError(f"{bra_.space} vs {ket_.space}")
    return complex(np.dot(bra_.amplitudes, ket_.amplitudes))


def phase_aligned_distance(x: LabeledState, y: LabeledState) -> float:
    """min over phi of ||x - e^{i phi} y||."""
    if x.space != y.space or x.kind != y.kind:
        raise SpaceMismatchError("phase-aligned distance needs matching space and kind")
    overlap = np.vdot(y.amplitudes, x.amplitudes)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(x.amplitudes - phase * y.amplitudes))


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    space: Space
    matrix: np.ndarray

    def __post_init__(self):
        d = self.space.dim
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, shape=(d, d)))

    def element(self, row: BasisLabel, col: BasisLabel) -> complex:
        return complex(self.matrix[self.space.index(row), self.space.index(col)])

    def adjoint(self) -> "LabeledOperator":
        return LabeledOperator(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol: float = TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def unitarity_defect(self) -> float:
        """max-entry norm of U^dagger U - I."""
        d = self.space.dim
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(d))))

    def is_unitary(self, tol: float = TOL) -> bool:
        return self.unitarity_defect() <= tol

    def _check(self, other: "LabeledOperator"):
        if other.space != self.space:
            raise SpaceMismatchError(f"{self.space} vs {other.space}")

    def __matmul__(self, other):
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        self._check(other)
        return LabeledOperator(self.space, self.matrix @ other.matrix)

    def __add__(self, other):
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        self._check(other)
        return LabeledOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        self._check(other)
        return LabeledOperator(self.space, self.matrix - other.matrix)

    def __mul__(self, c):
        if isinstance(c, (int, float, complex, np.number)):
            return LabeledOperator(self.space, self.matrix * c)
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.matrix, other.matrix)

    def allclose(self, other: "LabeledOperator", tol: float = TOL) -> bool:
        return self.space == other.space and bool(np.max(np.abs(self.matrix - other.matrix)) <= tol)

    def __repr__(self) -> str:
        return f"LabeledOperator(space={self.space}, matrix=\n{np.round(self.matrix, 6)})"


def apply(op: LabeledOperator, s: LabeledState) -> LabeledState:
    """A|psi> for kets, <phi|A for bras."""
    if op.space != s.space:
        raise SpaceMismatchError(f"operator on {op.space}, state on {s.space}")
    if s.is_bra:
        return LabeledState(s.space, s.amplitudes @ op.matrix, "bra")
    return LabeledState(s.space, op.matrix @ s.amplitudes, "ket")


def adjoint(op: LabeledOperator) -> LabeledOperator:
    return op.adjoint()


def identity(space: Space) -> LabeledOperator:
    return LabeledOperator(space, np.eye(space.dim))


def local_operator(factor_matrices: Mapping[str, np.ndarray], space: Space = SYSTEM) -> LabeledOperator:
    """Kronecker product of 2x2 factor matrices, identity on unnamed factors."""
    missing = set(factor_matrices) - set(space.factors)
    if missing:
        raise SpaceMismatchError(f"factors {sorted(missing)} not in {space}")
    mat = np.ones((1, 1), dtype=complex)
    for f in space.factors:
        mat = np.kron(mat, np.asarray(factor_matrices.get(f, np.eye(2)), dtype=complex))
    return LabeledOperator(space, mat)


def kron(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Tensor product of operators on disjoint factors, reordered canonically."""
    overlap = set(a.space.factors) & set(b.space.factors)
    if overlap:
        raise SpaceMismatchError(f"overlapping factors {sorted(overlap)}")
    space = Space(a.space.factors + b.space.factors)
    labels = space.labels
    mat = np.empty((space.dim, space.dim), dtype=complex)
    for i, r in enumerate(labels):
        for j, c in enumerate(labels):
            mat[i, j] = (a.element(r.restrict(a.space.factors), c.restrict(a.space.factors))
                         * b.element(r.restrict(b.space.factors), c.restrict(b.space.factors)))
    return LabeledOperator(space, mat)


# Pauli matrices in the (H, V) basis
SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
ARM_PROJECTOR = {
    "L": np.array([[1, 0], [0, 0]], dtype=complex),
    "R": np.array([[0, 0], [0, 1]], dtype=complex),
}


def path_projector(arm: str, space: Space = SYSTEM) -> LabeledOperator:
    return local_operator({"path": ARM_PROJECTOR[arm]}, space)


def pauli(axis: str, space: Space = SYSTEM) -> LabeledOperator:
    return local_operator({"pol": SIGMA[axis]}, space)


def pauli_in_arm(axis: str, arm: str, space: Space = SYSTEM) -> LabeledOperator:
    """Polarization observable measured in one arm, Pi_arm sigma_axis."""
    return local_operator({"path": ARM_PROJECTOR[arm], "pol": SIGMA[axis]}, space)


OBSERVABLES = ("SxL", "SyL", "SzL", "PiL", "SxR", "SyR", "SzR", "PiR", "I")


def observable(name: str, space: Space = SYSTEM) -> LabeledOperator:
    """Probe observable by its scenario-file name (see ``OBSERVABLES``)."""
    if name == "I":
        return identity(space)
    if name in ("PiL", "PiR"):
        return path_projector(name[-1], space)
    if len(name) == 3 and name[0] == "S" and name[1] in SIGMA and name[2] in ARM_PROJECTOR:
        return pauli_in_arm(name[1], name[2], space)
    if len(name) == 2 and name[0] == "S" and name[1] in SIGMA:
        return pauli(name[1], space)
    raise KeyError(f"unknown observable {name!r}")
