"""Two-qubit synthesis via the magic-basis canonical decomposition.

Every 4x4 unitary factors as ``U = e^{ip} (K1l x K1r) N(a,b,c) (K2l x K2r)``
with ``N(a,b,c) = exp(i(a XX + b YY + c ZZ))`` and canonical coordinates in
the chamber ``pi/4 >= a >= b >= |c|``.  The coordinates pick the entangler
count; circuits are built from fixed interaction templates whose one-qubit
prefactors are solved by simultaneous orthogonal diagonalization.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .matrices import gate_matrix as _gm
from .matrices import rx_matrix, ry_matrix, rz_matrix, cphase_matrix
from .ir import Gate
from .params import ParamExpr

COORD_TOL = 1e-8
_QUARTER = math.pi / 4

MAGIC = np.array(
    [[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]], dtype=complex
) / math.sqrt(2)
MAGIC_DAG = MAGIC.conj().T

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1.0, -1.0]).astype(complex)
_PAULI_PAIRS = [np.kron(_X, _X), np.kron(_Y, _Y), np.kron(_Z, _Z)]

# Diagonal values of XX, YY, ZZ in the magic basis (they are all diagonal there).
_AXIS_DIAGS = np.array(
    [np.real(np.diag(MAGIC_DAG @ pp @ MAGIC)) for pp in _PAULI_PAIRS]
)

CNOT01 = _gm(Gate("CNOT", (), (0, 1)))
CNOT10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
SWAP = _gm(Gate("SWAP", (), (0, 1)))
ISWAP = _gm(Gate("ISWAP", (), (0, 1)))
CZ = _gm(Gate("CZ", (), (0, 1)))
_H2 = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S2 = np.diag([1.0, 1j])
_V_XTOX_YTOZ = rx_matrix(math.pi / 2)


class SynthesisError(ValueError):
    pass


def canonical_matrix(a: float, b: float, c: float) -> np.ndarray:
    out = np.eye(4, dtype=complex)
    for theta, pp in zip((a, b, c), _PAULI_PAIRS):
        out = out @ (math.cos(theta) * np.eye(4) + 1j * math.sin(theta) * pp)
    return out


def _to_su4(u: np.ndarray) -> tuple[np.ndarray, float]:
    det = np.linalg.det(u)
    phase = cmath.phase(det) / 4.0
    return u * cmath.exp(-1j * phase), phase


def _cluster_boundaries(values: np.ndarray, tol: float) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            spans.append((start, i))
            start = i
    return spans


def _diagonalize_symmetric_unitary(s: np.ndarray) -> np.ndarray:
    """Real orthogonal P (det +1) with P.T @ s @ P diagonal, for unitary
    complex-symmetric ``s``.  Re(s) and Im(s) commute, so diagonalize Re(s)
    and refine inside its degenerate eigenspaces with Im(s)."""
    x, y = s.real, s.imag
    w, p = np.linalg.eigh(x)
    for start, end in _cluster_boundaries(w, 1e-6):
        if end - start > 1:
            block = p[:, start:end]
            _, r = np.linalg.eigh(block.T @ y @ block)
            p[:, start:end] = block @ r
    if np.linalg.det(p) < 0:
        p[:, 0] = -p[:, 0]
    off = p.T @ s @ p
    if np.max(np.abs(off - np.diag(np.diag(off)))) > 1e-6:
        raise SynthesisError("simultaneous diagonalization failed")
    return p


def su2su2_split(w: np.ndarray, tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """Split a Kronecker-product unitary into unit-determinant 2x2 factors."""
    blocks = [w[0:2, 0:2], w[0:2, 2:4], w[2:4, 0:2], w[2:4, 2:4]]
    norms = [np.linalg.norm(b) for b in blocks]
    k = int(np.argmax(norms))
    b_raw = blocks[k]
    a_tilde = np.array(
        [
            [np.trace(blocks[0] @ b_raw.conj().T), np.trace(blocks[1] @ b_raw.conj().T)],
            [np.trace(blocks[2] @ b_raw.conj().T), np.trace(blocks[3] @ b_raw.conj().T)],
        ]
    ) / 2.0
    a = a_tilde / cmath.sqrt(np.linalg.det(a_tilde))
    b = b_raw / cmath.sqrt(np.linalg.det(b_raw))
    approx = np.kron(a, b)
    phase = np.trace(approx.conj().T @ w) / 4.0
    phase /= abs(phase)
    a = a * phase
    if np.max(np.abs(np.kron(a, b) - w)) > tol:
        raise SynthesisError("matrix is not a tensor product of one-qubit unitaries")
    return a, b


@dataclass
class WeylDecomposition:
    """``u = exp(i phase) k1 @ canonical_matrix(a,b,c) @ k2`` with k1, k2 local."""

    k1: np.ndarray
    k2: np.ndarray
    a: float
    b: float
    c: float
    phase: float

    @property
    def coords(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)

    def reconstruct(self) -> np.ndarray:
        return (
            cmath.exp(1j * self.phase)
            * self.k1 @ canonical_matrix(self.a, self.b, self.c) @ self.k2
        )


def _solve_coordinates(thetas: np.ndarray) -> tuple[float, np.ndarray]:
    """Solve theta_k = g + a*xx_k + b*yy_k + c*zz_k for (g, a, b, c)."""
    m = np.column_stack([np.ones(4), _AXIS_DIAGS[0], _AXIS_DIAGS[1], _AXIS_DIAGS[2]])
    sol = np.linalg.solve(m, thetas)
    return float(sol[0]), sol[1:]


def weyl_decompose(u: np.ndarray) -> WeylDecomposition:
    su, phase = _to_su4(np.asarray(u, dtype=complex))
    m = MAGIC_DAG @ su @ MAGIC
    s = m @ m.T
    p = _diagonalize_symmetric_unitary(s)
    d = np.diag(p.T @ s @ p)
    thetas = np.angle(d) / 2.0
    # branch: total angle must vanish mod pi so K' below lands in SO(4)
    total = float(np.sum(thetas))
    correction = round(total / math.pi)
    thetas[0] -= correction * math.pi
    k_right = np.diag(np.exp(-1j * thetas)) @ p.T @ m
    if np.linalg.det(k_right).real < 0:
        thetas[0] += math.pi
        k_right = np.diag(np.exp(-1j * thetas)) @ p.T @ m
    g, coords = _solve_coordinates(thetas)
    k1 = MAGIC @ p @ MAGIC_DAG
    k2 = MAGIC @ k_right @ MAGIC_DAG
    decomp = WeylDecomposition(k1, k2, *coords, phase + g)
    return _canonicalize(decomp)


def _canonicalize(d: WeylDecomposition) -> WeylDecomposition:
    coords = [d.a, d.b, d.c]
    k1, k2 = d.k1.copy(), d.k2.copy()
    phase = d.phase

    def shift(i: int, steps: int) -> None:
        # N(.. +pi/2 ..) = N(..) * (i * PP): move the leftover local into k2
        nonlocal k2, phase
        coords[i] += steps * math.pi / 2
        extra = np.linalg.matrix_power(-1j * _PAULI_PAIRS[i], steps % 4)
        k2 = extra @ k2

    def negate(i: int, j: int) -> None:
        # conjugating with a one-sided Pauli flips the two other axes
        nonlocal k1, k2
        k = 3 - i - j
        w = np.kron([_X, _Y, _Z][k], np.eye(2))
        coords[i] = -coords[i]
        coords[j] = -coords[j]
        k1 = k1 @ w
        k2 = w @ k2

    def swap(i: int, j: int) -> None:
        nonlocal k1, k2
        k = 3 - i - j
        # one-qubit Clifford fixing Pauli axis k and exchanging the other two
        v = {0: _V_XTOX_YTOZ, 1: _H2, 2: _S2}[k]
        vv = np.kron(v, v)
        coords[i], coords[j] = coords[j], coords[i]
        k1 = k1 @ vv.conj().T
        k2 = vv @ k2

    for i in range(3):
        steps = -math.floor((coords[i] + _QUARTER - 1e-12) / (math.pi / 2))
        if steps:
            shift(i, steps)  # into (-pi/4, pi/4]
    # sort by magnitude (descending); negations below preserve magnitudes
    if abs(coords[0]) < abs(coords[1]):
        swap(0, 1)
    if abs(coords[1]) < abs(coords[2]):
        swap(1, 2)
    if abs(coords[0]) < abs(coords[1]):
        swap(0, 1)
    # signs can only be flipped in pairs; leave any leftover sign on c
    if coords[0] < -COORD_TOL and coords[1] < -COORD_TOL:
        negate(0, 1)
    if coords[0] < -COORD_TOL:
        negate(0, 2)
    if coords[1] < -COORD_TOL:
        negate(1, 2)
    # chamber edge: at a = pi/4 the sign of c is a local degree of freedom
    if abs(coords[0] - _QUARTER) < COORD_TOL and coords[2] < -COORD_TOL:
        negate(0, 2)
        shift(0, 1)
    return WeylDecomposition(k1, k2, coords[0], coords[1], coords[2], phase)


def canonical_coords(u: np.ndarray) -> tuple[float, float, float]:
    return weyl_decompose(u).coords


# ---------------------------------------------------------------------------
# Prefactor extraction: solve U = (A x B) V (C x D) when U and V share
# canonical coordinates.


# offset keeping angle sorting clear of the +-pi wraparound for the spectra
# encountered here (multiples of pi/2 shifted by canonical coordinates)
_SORT_SHIFT = cmath.exp(0.5501j)


def _sorted_diagonalization(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = _diagonalize_symmetric_unitary(s)
    d = np.diag(p.T @ s @ p)
    order = np.argsort(np.angle(d * _SORT_SHIFT))
    p = p[:, order]
    if np.linalg.det(p) < 0:
        p[:, 0] = -p[:, 0]
    return p, d[order]


def extract_prefactors(
    u: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Solve ``u = e^{ip} (A x B) v (C x D)`` for same-class u and v."""
    us, _ = _to_su4(u)
    vs, _ = _to_su4(v)
    mu = MAGIC_DAG @ us @ MAGIC
    p, du = _sorted_diagonalization(mu @ mu.T)
    # the SU(4) normalization is only fixed up to i^k, which scales the
    # magic-basis spectrum by (-1)^k; try both alignments
    for mv_phase in (1.0, 1.0j):
        mv = MAGIC_DAG @ (vs * mv_phase) @ MAGIC
        sv_ = mv @ mv.T
        q, dv = _sorted_diagonalization(sv_)
        if np.max(np.abs(du - dv)) < 1e-6:
            break
    else:
        raise SynthesisError("prefactor extraction on mismatched canonical classes")
    g = p @ q.T
    h = mv.conj().T @ q @ p.T @ mu
    if np.max(np.abs(h.imag)) > 1e-6:
        raise SynthesisError("prefactor extraction failed (H not orthogonal)")
    ab = MAGIC @ g @ MAGIC_DAG
    cd = MAGIC @ h.real @ MAGIC_DAG
    a, b = su2su2_split(ab)
    c, d = su2su2_split(cd)
    return a, b, c, d


# ---------------------------------------------------------------------------
# Circuit items.  A block is a list of ("1q", qubit, 2x2) and
# ("2q", op, theta-or-None, (qa, qb)) entries in execution order.

Item = tuple


def one_q(qubit: int, m: np.ndarray) -> Item:
    return ("1q", qubit, m)


def two_q(op: str, qubits: tuple[int, int], theta: float | None = None) -> Item:
    return ("2q", op, theta, qubits)


_2Q_MATS = {"CNOT": CNOT01, "CZ": CZ, "SWAP": SWAP, "ISWAP": ISWAP}


def item_matrix(item: Item, q0: int, q1: int) -> np.ndarray:
    """Matrix of an item on the 2-qubit space ordered (q0, q1)."""
    if item[0] == "1q":
        m = item[2]
        return np.kron(m, np.eye(2)) if item[1] == q0 else np.kron(np.eye(2), m)
    _, op, theta, qubits = item
    base = cphase_matrix(theta) if op == "CPHASE" else _2Q_MATS[op]
    if qubits == (q0, q1):
        return base
    return SWAP @ base @ SWAP


def items_matrix(items: list[Item], q0: int, q1: int) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for item in items:
        u = item_matrix(item, q0, q1) @ u
    return u


def entangler_count(items: list[Item]) -> int:
    return sum(1 for it in items if it[0] == "2q")


def _verify_items(items: list[Item], u: np.ndarray, q0: int, q1: int) -> bool:
    from .matrices import equiv_up_to_phase

    return equiv_up_to_phase(items_matrix(items, q0, q1), u, 1e-9)


# -- CNOT-basis construction -------------------------------------------------


def _locals_items(a: np.ndarray, b: np.ndarray, q0: int, q1: int) -> list[Item]:
    return [one_q(q0, a), one_q(q1, b)]


def _cnot_circuit_0(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    su, _ = _to_su4(u)
    a, b = su2su2_split(su)
    return _locals_items(a, b, q0, q1)


def _cnot_circuit_1(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    v = cmath.exp(1j * _QUARTER) * CNOT01
    a, b, c, d = extract_prefactors(u, v)
    return [
        one_q(q0, c), one_q(q1, d),
        two_q("CNOT", (q0, q1)),
        one_q(q0, a), one_q(q1, b),
    ]


def _cnot_circuit_2(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    coords = canonical_coords(u)
    phi, delta = 2.0 * coords[0], 2.0 * coords[1]
    inner = np.kron(rz_matrix(delta), rx_matrix(phi))
    v = CNOT10 @ inner @ CNOT10
    a, b, c, d = extract_prefactors(u, v)
    return [
        one_q(q0, c), one_q(q1, d),
        two_q("CNOT", (q1, q0)),
        one_q(q0, rz_matrix(delta)), one_q(q1, rx_matrix(phi)),
        two_q("CNOT", (q1, q0)),
        one_q(q0, a), one_q(q1, b),
    ]


def _cnot_circuit_3(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    swap_u = cmath.exp(1j * _QUARTER) * SWAP @ u
    su, _ = _to_su4(swap_u)
    m = MAGIC_DAG @ su @ MAGIC
    evs = np.linalg.eigvals(m @ m.T)
    angles = sorted(np.angle(evs))
    for (x, y, z) in _angle_triples(angles):
        alpha, beta, delta = (x + y) / 2.0, (x + z) / 2.0, (z + y) / 2.0
        inner = [
            two_q("CNOT", (q1, q0)),
            one_q(q0, rz_matrix(delta)), one_q(q1, ry_matrix(beta)),
            two_q("CNOT", (q0, q1)),
            one_q(q1, ry_matrix(alpha)),
            two_q("CNOT", (q1, q0)),
        ]
        v = items_matrix(inner, q0, q1)
        v = SWAP @ v  # the wire exchange below cancels this
        try:
            a, b, c, d = extract_prefactors(swap_u, v)
        except SynthesisError:
            continue
        items = [one_q(q0, c), one_q(q1, d), *inner, one_q(q0, b), one_q(q1, a)]
        if _verify_items(items, u, q0, q1):
            return items
    raise SynthesisError("three-entangler construction failed")


def _angle_triples(angles: list[float]):
    seen = set()
    order = [
        (0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3),
        (0, 2, 1), (0, 3, 1), (1, 3, 2), (2, 3, 1),
        (1, 0, 2), (2, 0, 3), (3, 1, 2), (3, 2, 0),
    ]
    for i, j, k in order:
        t = (angles[i], angles[j], angles[k])
        if t not in seen:
            seen.add(t)
            yield t


def min_cnot_count(coords: tuple[float, float, float]) -> int:
    a, b, c = coords
    if max(a, b, abs(c)) < COORD_TOL:
        return 0
    if abs(c) >= COORD_TOL:
        return 3
    if abs(a - _QUARTER) < COORD_TOL and b < COORD_TOL:
        return 1
    return 2


def cnot_basis_circuit(
    u: np.ndarray, q0: int, q1: int, force_count: int | None = None
) -> list[Item]:
    """CNOT-entangler circuit for an arbitrary 2Q unitary, minimal count by
    default; ``force_count`` in {2, 3} requests a non-minimal template."""
    count = force_count if force_count is not None else min_cnot_count(canonical_coords(u))
    builder = {
        0: _cnot_circuit_0, 1: _cnot_circuit_1,
        2: _cnot_circuit_2, 3: _cnot_circuit_3,
    }[count]
    items = builder(u, q0, q1)
    if not _verify_items(items, u, q0, q1):
        raise SynthesisError(f"{count}-entangler construction failed verification")
    return items


# -- other entangler bases ----------------------------------------------------

_RZ_MINUS_HALF = rz_matrix(-math.pi / 2)


def _as_cz_items(items: list[Item]) -> list[Item]:
    """Rewrite CNOT entanglers as CZ conjugated by Hadamards on the target."""
    out: list[Item] = []
    for item in items:
        if item[0] == "2q" and item[1] == "CNOT":
            qa, qb = item[3]
            out += [one_q(qb, _H2), two_q("CZ", (qa, qb)), one_q(qb, _H2)]
        else:
            out.append(item)
    return out


def _substitute_cz_with_iswap(items: list[Item], q0: int, q1: int) -> tuple[list[Item], bool]:
    """Replace each CZ by one ISWAP plus a virtual wire exchange.

    Uses CZ = e^{-i pi/2} (RZ(-pi/2) x RZ(-pi/2)) SWAP ISWAP; the SWAP is
    tracked as a relabeling.  Returns the items and whether a net exchange
    remains: if it does, the items implement SWAP @ input instead of input.
    """
    where = {q0: q0, q1: q1}
    out: list[Item] = []
    for item in items:
        if item[0] == "1q":
            out.append(one_q(where[item[1]], item[2]))
            continue
        _, op, theta, (qa, qb) = item
        if op != "CZ":
            raise SynthesisError(f"unexpected entangler {op} during ISWAP substitution")
        out.append(two_q("ISWAP", (where[qa], where[qb])))
        where[q0], where[q1] = where[q1], where[q0]
        out += [one_q(q0, _RZ_MINUS_HALF), one_q(q1, _RZ_MINUS_HALF)]
    return out, where[q0] != q0


def iswap_basis_circuit(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    """ISWAP-entangler circuit: 0, 1, 2, or 3 applications by canonical class."""
    a, b, c = canonical_coords(u)
    if max(a, b, abs(c)) < COORD_TOL:
        return _cnot_circuit_0(u, q0, q1)
    if abs(a - _QUARTER) < COORD_TOL and abs(b - _QUARTER) < COORD_TOL and abs(c) < COORD_TOL:
        av, bv, cv, dv = extract_prefactors(u, ISWAP)
        items = [one_q(q0, cv), one_q(q1, dv), two_q("ISWAP", (q0, q1)),
                 one_q(q0, av), one_q(q1, bv)]
    elif abs(c) < COORD_TOL:
        base = _as_cz_items(cnot_basis_circuit(u, q0, q1, force_count=2))
        items, swapped = _substitute_cz_with_iswap(base, q0, q1)
        if swapped:
            raise SynthesisError("parity error in two-ISWAP substitution")
    else:
        mirror = SWAP @ u
        base = _as_cz_items(cnot_basis_circuit(mirror, q0, q1, force_count=3))
        items, swapped = _substitute_cz_with_iswap(base, q0, q1)
        if not swapped:
            raise SynthesisError("parity error in three-ISWAP substitution")
    if not _verify_items(items, u, q0, q1):
        raise SynthesisError("ISWAP construction failed verification")
    return items


def cphase_line_circuit(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    """Single wildcard-CPHASE realization for coordinates (a, 0, 0)."""
    a, b, c = canonical_coords(u)
    if b > COORD_TOL or abs(c) > COORD_TOL:
        raise SynthesisError("not a controlled-phase class unitary")
    theta = 4.0 * a
    av, bv, cv, dv = extract_prefactors(u, cphase_matrix(theta))
    items = [one_q(q0, cv), one_q(q1, dv), two_q("CPHASE", (q0, q1), theta),
             one_q(q0, av), one_q(q1, bv)]
    if not _verify_items(items, u, q0, q1):
        raise SynthesisError("CPHASE construction failed verification")
    return items


def mixed_iswap_circuit(u: np.ndarray, q0: int, q1: int) -> list[Item]:
    """One ISWAP followed by the CNOT-basis remainder; pays off when the
    remainder's class is cheaper than the input's (e.g. SWAP = ISWAP + CZ)."""
    w = u @ ISWAP.conj().T
    items = [two_q("ISWAP", (q0, q1))] + cnot_basis_circuit(w, q0, q1)
    if not _verify_items(items, u, q0, q1):
        raise SynthesisError("mixed construction failed verification")
    return items


def two_qubit_candidates(
    u: np.ndarray, q0: int, q1: int, ops: set[str]
) -> list[list[Item]]:
    """Candidate circuits for ``u`` over the link's native 2Q operator set.

    ``ops`` may contain CNOT, CZ, CPHASE (wildcard parameter), ISWAP.
    """
    a, b, c = canonical_coords(u)
    czlike = bool(ops & {"CNOT", "CZ", "CPHASE"})
    candidates: list[list[Item]] = []
    if max(a, b, abs(c)) < COORD_TOL:
        return [_cnot_circuit_0(u, q0, q1)]
    if czlike:
        candidates.append(cnot_basis_circuit(u, q0, q1))
    if "CPHASE" in ops and b < COORD_TOL and abs(c) < COORD_TOL:
        candidates.append(cphase_line_circuit(u, q0, q1))
    if "ISWAP" in ops:
        candidates.append(iswap_basis_circuit(u, q0, q1))
        if czlike and abs(c) >= COORD_TOL:
            candidates.append(mixed_iswap_circuit(u, q0, q1))
    if not candidates:
        raise SynthesisError(f"no native two-qubit operator among {sorted(ops)}")
    return candidates
