"""Single-qubit synthesis: ZYZ angles and chip-native emission.

Identities used (verified by the test suite):
    RY(b) = RX(-pi/2) RZ(b) RX(pi/2)
    RX(b) = RZ(-pi/2) RY(b) RZ(pi/2)
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .chip import ChipSpecification, NativeStatus, is_native
from .ir import Gate
from .matrices import gate_matrix, ry_matrix, rz_matrix
from .params import ParamExpr

DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class ZyzAngles:
    """U = exp(i*phase) RZ(gamma) RY(beta) RZ(alpha), alpha applied first."""

    alpha: float
    beta: float
    gamma: float
    phase: float


def zyz_decompose(u: np.ndarray) -> ZyzAngles:
    """Euler angles of a 2x2 unitary; beta lies in [0, pi].

    Degenerate rotations (beta ~ 0 or pi) fold all Z-rotation into alpha.
    """
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    phase = cmath.phase(det) / 2.0
    v = u * cmath.exp(-1j * phase)
    beta = 2.0 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    if beta < DEGENERATE_TOL:
        return ZyzAngles(2.0 * cmath.phase(v[1, 1]), 0.0, 0.0, phase)
    if beta > math.pi - DEGENERATE_TOL:
        return ZyzAngles(-2.0 * cmath.phase(v[1, 0]), math.pi, 0.0, phase)
    plus = cmath.phase(v[1, 1])
    minus = cmath.phase(v[1, 0])
    return ZyzAngles(plus - minus, beta, plus + minus, phase)


def zyz_reconstruct(angles: ZyzAngles) -> np.ndarray:
    return (
        cmath.exp(1j * angles.phase)
        * rz_matrix(angles.gamma) @ ry_matrix(angles.beta) @ rz_matrix(angles.alpha)
    )


def _p(x: float) -> tuple[ParamExpr, ...]:
    return (ParamExpr(x),)


def zyz_gates(u: np.ndarray, qubit: int) -> list[Gate]:
    """Plain RZ/RY/RZ instruction stream for a 1Q unitary."""
    a = zyz_decompose(u)
    return [
        Gate("RZ", _p(a.alpha), (qubit,)),
        Gate("RY", _p(a.beta), (qubit,)),
        Gate("RZ", _p(a.gamma), (qubit,)),
    ]


def _norm_angle(theta: float) -> float:
    theta = math.fmod(theta, 2 * math.pi)
    if theta > math.pi:
        theta -= 2 * math.pi
    elif theta <= -math.pi:
        theta += 2 * math.pi
    return theta


def _simplify_rotations(seq: list[Gate]) -> list[Gate]:
    """Merge adjacent same-axis rotations, drop angles that are 0 mod 2pi."""
    out: list[Gate] = []
    for gate in seq:
        theta = _norm_angle(gate.params[0].value)
        if out and out[-1].name == gate.name:
            theta = _norm_angle(out.pop().params[0].value + theta)
        if abs(theta) > 1e-11 and abs(abs(theta) - 2 * math.pi) > 1e-11:
            out.append(Gate(gate.name, _p(theta), gate.qubits))
    return out


def _candidate_forms(u: np.ndarray, qubit: int) -> list[list[Gate]]:
    a = zyz_decompose(u)
    al, be, ga = a.alpha, a.beta, a.gamma
    half = math.pi / 2
    forms = [
        # single-axis specials
        [Gate("RZ", _p(al + ga), (qubit,))] if be < DEGENERATE_TOL else None,
        # zyz and zxz triples
        [Gate("RZ", _p(al), (qubit,)), Gate("RY", _p(be), (qubit,)), Gate("RZ", _p(ga), (qubit,))],
        [Gate("RZ", _p(al - half), (qubit,)), Gate("RX", _p(be), (qubit,)),
         Gate("RZ", _p(ga + half), (qubit,))],
        # zxzxz with fixed-angle RX(+-pi/2)
        [Gate("RZ", _p(al), (qubit,)), Gate("RX", _p(half), (qubit,)),
         Gate("RZ", _p(be), (qubit,)), Gate("RX", _p(-half), (qubit,)),
         Gate("RZ", _p(ga), (qubit,))],
    ]
    candidates = [_simplify_rotations(f) for f in forms if f is not None]
    seen, unique = set(), []
    for cand in candidates:
        key = tuple((g.name, round(g.params[0].value, 12)) for g in cand)
        if key not in seen:
            seen.add(key)
            unique.append(cand)
    return sorted(unique, key=len)


def native_1q_sequence(u: np.ndarray, qubit: int, chip: ChipSpecification) -> list[Gate]:
    """Shortest all-native emission of a 1Q unitary on the chip, up to phase."""
    for cand in _candidate_forms(u, qubit):
        if all(is_native(chip, g) is NativeStatus.NATIVE for g in cand):
            return cand
    raise ValueError(
        f"cannot express a one-qubit unitary natively on qubit {qubit}; "
        "chip needs a universal 1Q gate set (e.g. RZ(_) plus RX(pi/2))")


def nativize_1q(gate: Gate, chip: ChipSpecification, definitions=None) -> list[Gate]:
    return native_1q_sequence(gate_matrix(gate, definitions), gate.qubits[0], chip)
