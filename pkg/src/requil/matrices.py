"""Dense matrices for gates and small programs.

Convention: in a gate's own matrix, the first qubit argument is the most
significant bit of the basis index.  System-level unitaries follow the same
rule for a given qubit ordering (position 0 = most significant).
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .ir import DefGate, Gate

UNITARITY_TOL = 1e-9


class MatrixError(ValueError):
    """Raised for symbolic parameters, unknown gates, or non-unitary matrices."""


def rx_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.array([[cmath.exp(-0.5j * theta), 0], [0, cmath.exp(0.5j * theta)]])


def cphase_matrix(theta: float) -> np.ndarray:
    return np.diag([1, 1, 1, cmath.exp(1j * theta)])


_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

_FIXED: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1, -1]).astype(complex),
    "H": _H,
    "S": np.diag([1, 1j]),
    "T": np.diag([1, cmath.exp(0.25j * math.pi)]),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "ISWAP": np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]]),
}

_PARAMETRIC = {
    "RX": rx_matrix,
    "RY": ry_matrix,
    "RZ": rz_matrix,
    "CPHASE": cphase_matrix,
}


def _ccnot_matrix() -> np.ndarray:
    m = np.eye(8, dtype=complex)
    m[[6, 7]] = m[[7, 6]]
    return m


_FIXED["CCNOT"] = _ccnot_matrix()


def is_unitary(m: np.ndarray, tol: float = UNITARITY_TOL) -> bool:
    d = m.shape[0]
    return m.shape == (d, d) and np.linalg.norm(m @ m.conj().T - np.eye(d)) <= tol * d


def gate_matrix(gate: Gate, definitions: dict[str, DefGate] | None = None) -> np.ndarray:
    """Matrix of a gate application; every parameter must be concrete."""
    if not gate.is_concrete():
        raise MatrixError(f"gate {gate} has symbolic parameters")
    values = [p.value for p in gate.params]
    if gate.name in _FIXED:
        return _FIXED[gate.name].copy()
    if gate.name in _PARAMETRIC:
        return _PARAMETRIC[gate.name](values[0])
    if definitions and gate.name in definitions:
        defn = definitions[gate.name]
        env = {name: complex(v) for name, v in zip(defn.parameters, values)}
        m = np.array(
            [[entry.evaluate(env) for entry in row] for row in defn.matrix],
            dtype=complex,
        )
        if not is_unitary(m):
            raise MatrixError(f"DEFGATE {gate.name} evaluates to a non-unitary matrix")
        return m
    raise MatrixError(f"no matrix for gate {gate.name!r}")


def equiv_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> bool:
    """True iff ``a = exp(i theta) b`` within ``tol`` (max-entry norm)."""
    if a.shape != b.shape:
        raise MatrixError(f"dimension mismatch: {a.shape} vs {b.shape}")
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    pivot = b[idx]
    if abs(pivot) < tol:
        return bool(np.max(np.abs(a)) <= tol)
    phase = a[idx] / pivot
    if abs(abs(phase) - 1.0) > tol:
        return False
    return bool(np.max(np.abs(a - phase * b)) <= tol)


def apply_matrix(state: np.ndarray, m: np.ndarray, positions: tuple[int, ...], n: int) -> np.ndarray:
    """Apply a k-qubit matrix at the given bit positions of an n-qubit vector
    (or batch of vectors along the last axis)."""
    k = len(positions)
    batch = state.ndim == 2
    width = state.shape[1] if batch else 1
    tensor = state.reshape((2,) * n + (width,))
    tensor = np.moveaxis(tensor, positions, range(k))
    folded = tensor.reshape(2**k, -1)
    folded = m @ folded
    tensor = folded.reshape((2,) * k + tensor.shape[k:])
    tensor = np.moveaxis(tensor, range(k), positions)
    out = tensor.reshape(2**n, width)
    return out if batch else out[:, 0]


def embed_matrix(m: np.ndarray, positions: tuple[int, ...], n: int) -> np.ndarray:
    """Lift a k-qubit matrix to the full n-qubit space."""
    return apply_matrix(np.eye(2**n, dtype=complex), m, positions, n)


def sequence_unitary(
    gates: list[Gate],
    qubit_order: list[int],
    definitions: dict[str, DefGate] | None = None,
) -> np.ndarray:
    """Composite unitary of a gate list over the given qubit ordering."""
    n = len(qubit_order)
    position = {q: i for i, q in enumerate(qubit_order)}
    u = np.eye(2**n, dtype=complex)
    for gate in gates:
        m = gate_matrix(gate, definitions)
        pos = tuple(position[q] for q in gate.qubits)
        u = apply_matrix(u, m, pos, n)
    return u


def run_state(
    gates: list[Gate],
    qubit_order: list[int],
    definitions: dict[str, DefGate] | None = None,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Evolve |0...0> (or ``initial``) through a gate list."""
    n = len(qubit_order)
    position = {q: i for i, q in enumerate(qubit_order)}
    state = np.zeros(2**n, dtype=complex)
    state[0] = 1.0
    if initial is not None:
        state = initial.astype(complex)
    for gate in gates:
        m = gate_matrix(gate, definitions)
        pos = tuple(position[q] for q in gate.qubits)
        state = apply_matrix(state, m, pos, n)
    return state


def states_equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-7) -> bool:
    overlap = np.vdot(a, b)
    return abs(abs(overlap) - 1.0) <= tol and abs(np.linalg.norm(a) - 1) < 1e-6


def permutation_matrix(perm: dict[int, int], n: int) -> np.ndarray:
    """Matrix moving the content of position p to position perm[p] (MSB-first)."""
    full = {p: perm.get(p, p) for p in range(n)}
    dim = 2**n
    m = np.zeros((dim, dim), dtype=complex)
    for idx in range(dim):
        out = 0
        for p in range(n):
            bit = (idx >> (n - 1 - p)) & 1
            out |= bit << (n - 1 - full[p])
        m[out, idx] = 1.0
    return m
