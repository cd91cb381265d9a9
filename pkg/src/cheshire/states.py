"""Hand-written pre/post states for the partial and complete Cheshire cats."""
from __future__ import annotations

import math

from .linalg import LabeledState, basis_ket, tensor
from .tsvf import TwoStateVector, flip_polarization, superpose

R2 = 1 / math.sqrt(2)

L = basis_ket(path="L")
R = basis_ket(path="R")
H = basis_ket(pol="H")
V = basis_ket(pol="V")


def preselected(pol: str = "H") -> LabeledState:
    """(|L> + |R>)/sqrt2 (x) |pol>."""
    return tensor((L + R) * R2, H if pol == "H" else V)


def postselected() -> LabeledState:
    """(<L|<H| + <R|<V|)/sqrt2."""
    return ((tensor(L, H) + tensor(R, V)) * R2).dual()


def postselected_flipped() -> LabeledState:
    """(<L|<V| + <R|<H|)/sqrt2."""
    return flip_polarization(postselected())


def partial_cat() -> TwoStateVector:
    return superpose([(postselected(), preselected("H"), 1)])


def complete_cat() -> TwoStateVector:
    return superpose([
        (postselected(), preselected("H"), 1),
        (postselected_flipped(), preselected("V"), 1),
    ])


# Expected weak-value tables: arm -> (sx, sy, sz, I)
PARTIAL_CAT_TABLE = {"L": (0, 0, 1, 1), "R": (1, 1j, 0, 0)}
COMPLETE_CAT_TABLE = {"L": (0, 0, 0, 1), "R": (1, 0, 0, 0)}
TABLE_COLUMNS = ("Sx", "Sy", "Sz", "Pi")


def table_observable(column: str, arm: str) -> str:
    """Scenario observable name for a table cell, e.g. ('Sx', 'L') -> 'SxL'."""
    return f"{column}{arm}"
