"""Generic n-qubit synthesis (n <= 4) over one-qubit gates and CNOT.

Reduces the matrix to a diagonal with Givens rotations on adjacent row pairs,
realizes each resulting two-level unitary as a multi-controlled one-qubit
gate reached through a Gray-code conjugation chain, and expands the
multi-controlled gates with the usual square-root recursion.  Gate counts are
nowhere near optimal; correctness and total coverage are the point.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .euler import zyz_decompose
from .ir import Gate
from .params import ParamExpr

ELIM_TOL = 1e-12


class GenericSynthesisError(ValueError):
    pass


def _p(x: float) -> tuple[ParamExpr, ...]:
    return (ParamExpr(float(x)),)


def _rot_gates(u2: np.ndarray, qubit: int) -> list[Gate]:
    """1Q unitary as an RZ/RY/RZ stream, dropping near-identity rotations."""
    ang = zyz_decompose(u2)
    out = []
    if abs(ang.alpha) > 1e-12:
        out.append(Gate("RZ", _p(ang.alpha), (qubit,)))
    if abs(ang.beta) > 1e-12:
        out.append(Gate("RY", _p(ang.beta), (qubit,)))
    if abs(ang.gamma) > 1e-12:
        out.append(Gate("RZ", _p(ang.gamma), (qubit,)))
    return out


def _sqrt_2x2(u: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(u)
    return v @ np.diag(np.exp(0.5j * np.angle(w)) * np.abs(w) ** 0.5) @ np.linalg.inv(v)


def _controlled_u(control: int, target: int, u: np.ndarray) -> list[Gate]:
    """Barenco ABC construction: CU from two CNOTs and one-qubit rotations."""
    ang = zyz_decompose(u)
    beta, gamma, delta, alpha = ang.gamma, ang.beta, ang.alpha, ang.phase
    a = np.array(rz(beta) @ ry(gamma / 2))
    b = np.array(ry(-gamma / 2) @ rz(-(delta + beta) / 2))
    c = np.array(rz((delta - beta) / 2))
    gates: list[Gate] = []
    gates += _rot_gates(c, target)
    gates.append(Gate("CNOT", (), (control, target)))
    gates += _rot_gates(b, target)
    gates.append(Gate("CNOT", (), (control, target)))
    gates += _rot_gates(a, target)
    if abs(alpha) > 1e-12:
        gates.append(Gate("RZ", _p(alpha), (control,)))
    return gates


def rz(theta: float) -> np.ndarray:
    return np.array([[cmath.exp(-0.5j * theta), 0], [0, cmath.exp(0.5j * theta)]])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def ccnot_template(a: int, b: int, c: int) -> list[Gate]:
    """The standard CCNOT realization over CNOT, H, and RZ(+-pi/4)."""
    q = math.pi / 4
    return [
        Gate("H", (), (c,)),
        Gate("CNOT", (), (b, c)),
        Gate("RZ", _p(-q), (c,)),
        Gate("CNOT", (), (a, c)),
        Gate("RZ", _p(q), (c,)),
        Gate("CNOT", (), (b, c)),
        Gate("RZ", _p(-q), (c,)),
        Gate("CNOT", (), (a, c)),
        Gate("RZ", _p(q), (b,)),
        Gate("RZ", _p(q), (c,)),
        Gate("CNOT", (), (a, b)),
        Gate("H", (), (c,)),
        Gate("RZ", _p(q), (a,)),
        Gate("RZ", _p(-q), (b,)),
        Gate("CNOT", (), (a, b)),
    ]


def _multi_controlled(
    kernel: np.ndarray, controls: list[int], target: int
) -> list[Gate]:
    """Kernel on ``target`` conditioned on every control being 1."""
    m = len(controls)
    if m == 0:
        return _rot_gates(kernel, target)
    if m == 1:
        return _controlled_u(controls[0], target, kernel)
    v = _sqrt_2x2(kernel)
    vdag = v.conj().T
    if m == 2:
        c1, c2 = controls
        return (
            _controlled_u(c2, target, v)
            + [Gate("CNOT", (), (c1, c2))]
            + _controlled_u(c2, target, vdag)
            + [Gate("CNOT", (), (c1, c2))]
            + _controlled_u(c1, target, v)
        )
    if m == 3:
        c1, c2, c3 = controls
        return (
            _controlled_u(c3, target, v)
            + ccnot_template(c1, c2, c3)
            + _controlled_u(c3, target, vdag)
            + ccnot_template(c1, c2, c3)
            + _multi_controlled(v, [c1, c2], target)
        )
    raise GenericSynthesisError(f"{m} controls not supported")


def _pattern_controlled(
    kernel: np.ndarray, pattern: list[tuple[int, int]], target: int
) -> list[Gate]:
    """Kernel on ``target`` conditioned on (qubit, wanted-bit) pairs."""
    flips = [Gate("X", (), (q,)) for q, want in pattern if want == 0]
    inner = _multi_controlled(kernel, [q for q, _ in pattern], target)
    return flips + inner + list(reversed(flips))


def _two_level_gates(
    kernel: np.ndarray, i: int, j: int, n: int, qubits: list[int]
) -> list[Gate]:
    """Two-level unitary mixing basis states i and j (i < j), MSB-first bits."""
    diff = [p for p in range(n) if ((i >> (n - 1 - p)) ^ (j >> (n - 1 - p))) & 1]
    t = diff[-1]
    chain: list[Gate] = []
    state = j
    for p in diff[:-1]:
        # flip bit p of the walking state toward i's value
        pattern = [
            (qubits[o], (state >> (n - 1 - o)) & 1) for o in range(n) if o != p
        ]
        chain += _pattern_controlled(np.array([[0, 1], [1, 0]], dtype=complex),
                                     pattern, qubits[p])
        state ^= 1 << (n - 1 - p)
    # state now differs from i only at bit t
    i_t = (i >> (n - 1 - t)) & 1
    k = kernel if i_t == 0 else np.array([[kernel[1, 1], kernel[1, 0]],
                                          [kernel[0, 1], kernel[0, 0]]])
    pattern = [(qubits[o], (i >> (n - 1 - o)) & 1) for o in range(n) if o != t]
    core = _pattern_controlled(k, pattern, qubits[t])
    return chain + core + _invert_gates(chain)


def _invert_gates(seq: list[Gate]) -> list[Gate]:
    out = []
    for gate in reversed(seq):
        if gate.name in ("RZ", "RY", "RX"):
            out.append(Gate(gate.name, _p(-gate.params[0].value), gate.qubits))
        else:  # X, H, CNOT are self-inverse
            out.append(gate)
    return out


def generic_synthesize_matrix(u: np.ndarray, qubits: list[int]) -> list[Gate]:
    """Synthesize an arbitrary unitary on 2..4 qubits over 1Q gates and CNOT."""
    n = len(qubits)
    if not 2 <= n <= 4:
        raise GenericSynthesisError(f"generic synthesis supports 2..4 qubits, got {n}")
    dim = 2**n
    if u.shape != (dim, dim):
        raise GenericSynthesisError(f"matrix shape {u.shape} does not match {n} qubits")
    work = np.array(u, dtype=complex)
    ops: list[tuple[np.ndarray, int, int]] = []  # (kernel, i, j) applied to reach diagonal
    for col in range(dim - 1):
        for row in range(dim - 1, col, -1):
            y = work[row, col]
            if abs(y) <= ELIM_TOL:
                continue
            x = work[row - 1, col]
            norm = math.hypot(abs(x), abs(y))
            g = np.array([[x.conjugate() / norm, y.conjugate() / norm],
                          [y / norm, -x / norm]])
            emb = np.eye(dim, dtype=complex)
            emb[np.ix_([row - 1, row], [row - 1, row])] = g
            work = emb @ work
            ops.append((g, row - 1, row))
    phases = np.angle(np.diag(work))
    if np.max(np.abs(np.abs(np.diag(work)) - 1.0)) > 1e-8:
        raise GenericSynthesisError("matrix is not unitary")

    gates: list[Gate] = []
    # relative diagonal phases, one pattern-controlled phase kernel per state
    for k in range(1, dim):
        psi = phases[k] - phases[0]
        if abs(psi) < 1e-12:
            continue
        t = next(p for p in range(n) if (k >> (n - 1 - p)) & 1)
        kernel = np.diag([1.0, cmath.exp(1j * psi)]).astype(complex)
        pattern = [(qubits[o], (k >> (n - 1 - o)) & 1) for o in range(n) if o != t]
        gates += _pattern_controlled(kernel, pattern, qubits[t])
    # then the two-level factors, inverses in reverse order
    for g, i, j in reversed(ops):
        gates += _two_level_gates(g.conj().T, i, j, n, qubits)
    return gates
