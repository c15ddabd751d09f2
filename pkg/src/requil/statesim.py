"""Bounded partial pure-state simulation for state-aware optimization.

The program state starting from |0...0> is tracked as disjoint components of
at most ``limit`` qubits each.  A gate that would merge components past the
limit, a symbolic-parameter gate, and a MEASURE all abandon tracking of the
touched qubits permanently.  The annotations feed two state-aware rules:
eigenvector elision and leading-segment state preparation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chip import ChipSpecification
from .euler import native_1q_sequence
from .ir import DefGate, Gate, Instruction, Measure, instruction_qubits
from .matrices import MatrixError, apply_matrix, gate_matrix

DEFAULT_ENTANGLEMENT_LIMIT = 3
SPLIT_TOL = 1e-9
EIGEN_TOL = 1e-9
NORM_TOL = 1e-10


@dataclass
class Component:
    qubits: tuple[int, ...]  # sorted; first qubit is the most significant bit
    vector: np.ndarray


@dataclass
class PartialState:
    components: list[Component] = field(default_factory=list)
    unknown: set[int] = field(default_factory=set)

    def copy(self) -> PartialState:
        return PartialState(
            [Component(c.qubits, c.vector.copy()) for c in self.components],
            set(self.unknown),
        )

    def tracked(self, qubit: int) -> bool:
        return qubit not in self.unknown

    def component_of(self, qubit: int) -> Component | None:
        for c in self.components:
            if qubit in c.qubits:
                return c
        return None

    def ensure(self, qubit: int) -> Component:
        """Untouched tracked qubits implicitly sit in |0>."""
        c = self.component_of(qubit)
        if c is None:
            c = Component((qubit,), np.array([1.0, 0.0], dtype=complex))
            self.components.append(c)
        return c

    def joint_vector(self, qubits: tuple[int, ...]) -> tuple[tuple[int, ...], np.ndarray]:
        """Tensor together the components covering ``qubits`` (no mutation)."""
        comps = []
        for q in qubits:
            if q in self.unknown:
                raise ValueError(f"qubit {q} is not tracked")
            c = self.ensure(q)
            if c not in comps:
                comps.append(c)
        joined_qubits: tuple[int, ...] = ()
        vec = np.array([1.0], dtype=complex)
        for c in comps:
            joined_qubits += c.qubits
            vec = np.kron(vec, c.vector)
        order = tuple(sorted(joined_qubits))
        perm = [joined_qubits.index(q) for q in order]
        n = len(order)
        tensor = vec.reshape((2,) * n)
        tensor = np.transpose(tensor, perm)
        return order, tensor.reshape(-1)

    def forget(self, qubits: tuple[int, ...]) -> None:
        """Abandon tracking of the whole component of each given qubit."""
        doomed = set(qubits)
        for q in qubits:
            c = self.component_of(q)
            if c is not None:
                doomed |= set(c.qubits)
        self.components = [c for c in self.components if not doomed & set(c.qubits)]
        self.unknown |= doomed

    def apply(self, gate: Gate, matrix: np.ndarray, limit: int) -> bool:
        """Evolve by a concrete gate; returns False if tracking was abandoned."""
        if any(q in self.unknown for q in gate.qubits):
            self.forget(gate.qubits)
            return False
        order, vec = self.joint_vector(gate.qubits)
        if len(order) > limit:
            self.forget(gate.qubits)
            return False
        positions = tuple(order.index(q) for q in gate.qubits)
        vec = apply_matrix(vec, matrix, positions, len(order))
        self.components = [c for c in self.components if not set(c.qubits) & set(order)]
        self.components.append(Component(order, vec))
        self._split(order)
        return True

    def _split(self, qubits: tuple[int, ...]) -> None:
        """Factor product qubits out of the component holding ``qubits``."""
        changed = True
        while changed:
            changed = False
            c = self.component_of(qubits[0])
            if c is None or len(c.qubits) == 1:
                return
            n = len(c.qubits)
            for k, q in enumerate(c.qubits):
                tensor = np.moveaxis(c.vector.reshape((2,) * n), k, 0).reshape(2, -1)
                u, s, vt = np.linalg.svd(tensor, full_matrices=False)
                if s[1] < SPLIT_TOL:
                    rest_qubits = tuple(x for x in c.qubits if x != q)
                    self.components.remove(c)
                    self.components.append(Component((q,), u[:, 0] * 1.0))
                    self.components.append(Component(rest_qubits, vt[0] * s[0]))
                    changed = True
                    break


def initial_state() -> PartialState:
    return PartialState()


def partial_simulate(
    seq: list[Instruction],
    limit: int = DEFAULT_ENTANGLEMENT_LIMIT,
    definitions: dict[str, DefGate] | None = None,
) -> list[PartialState | None]:
    """Snapshot of the tracked state before each instruction.

    An entry is None once every qubit the instruction touches is untracked.
    """
    state = initial_state()
    snapshots: list[PartialState | None] = []
    for instr in seq:
        qubits = instruction_qubits(instr)
        if qubits and all(not state.tracked(q) for q in qubits):
            snapshots.append(None)
            continue
        snapshots.append(state.copy())
        _advance(state, instr, limit, definitions)
    return snapshots


def _advance(state: PartialState, instr: Instruction, limit: int,
             definitions: dict[str, DefGate] | None) -> None:
    if isinstance(instr, Measure):
        state.forget((instr.qubit,))
        return
    if not isinstance(instr, Gate):
        return
    if not instr.is_concrete():
        state.forget(instr.qubits)
        return
    try:
        m = gate_matrix(instr, definitions)
    except MatrixError:
        state.forget(instr.qubits)
        return
    state.apply(instr, m, limit)


# ---------------------------------------------------------------------------
# State-aware rules


def elide_on_eigenvector(instr: Instruction, ctx) -> list[Instruction] | None:
    """Drop a gate whose input state is one of its eigenvectors."""
    state: PartialState | None = getattr(ctx, "state", None)
    if state is None or not isinstance(instr, Gate) or not instr.is_concrete():
        return None
    if any(not state.tracked(q) for q in instr.qubits):
        return None
    try:
        m = gate_matrix(instr, ctx.definitions)
        order, vec = state.joint_vector(instr.qubits)
    except (MatrixError, ValueError):
        return None
    positions = tuple(order.index(q) for q in instr.qubits)
    out = apply_matrix(vec, m, positions, len(order))
    if abs(abs(np.vdot(vec, out)) - 1.0) < EIGEN_TOL:
        return []
    return None


def state_prep_resynthesize(
    target: np.ndarray, qubits: tuple[int, ...], chip: ChipSpecification
) -> list[Gate]:
    """Native gates preparing ``target`` from |0..0> on one or two qubits."""
    if abs(np.linalg.norm(target) - 1.0) > NORM_TOL:
        raise ValueError("state-preparation target must be unit norm")
    if len(qubits) == 1:
        return _prep_1q(target, qubits[0], chip)
    if len(qubits) == 2:
        return _prep_2q(target, qubits, chip)
    raise ValueError("state preparation handles at most two qubits")


def _prep_unitary_1q(target: np.ndarray) -> np.ndarray:
    """A unitary with U|0> = target (its second column is any completion)."""
    a, b = target
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]])


def _prep_1q(target: np.ndarray, qubit: int, chip: ChipSpecification) -> list[Gate]:
    return native_1q_sequence(_prep_unitary_1q(target), qubit, chip)


def _prep_2q(target: np.ndarray, qubits: tuple[int, ...], chip: ChipSpecification
             ) -> list[Gate]:
    from .rules import EmissionError, _Emitter  # local to avoid an import cycle

    qa, qb = qubits
    m = target.reshape(2, 2)
    u, s, vt = np.linalg.svd(m)
    if s[1] < SPLIT_TOL:
        # product state: two independent one-qubit preparations
        return _prep_1q(u[:, 0] * (s[0] / abs(s[0]) if abs(s[0]) else 1.0), qa, chip) + \
            _prep_1q(vt[0] / np.linalg.norm(vt[0]), qb, chip)
    if not chip.has_link(qa, qb):
        raise EmissionError(f"state preparation needs a link between {qa} and {qb}")
    em = _Emitter(chip)
    # |t> = (A x B) CNOT (RY(theta) x I) |00>, theta from the Schmidt weights
    theta = 2.0 * math.atan2(s[1], s[0])
    em.push_1q(qa, np.array([[math.cos(theta / 2), -math.sin(theta / 2)],
                             [math.sin(theta / 2), math.cos(theta / 2)]], dtype=complex))
    em.emit_2q("CNOT", None, qa, qb)
    em.push_1q(qa, u)
    em.push_1q(qb, vt.T)
    em.flush(qa, qb)
    return em.out


# ---------------------------------------------------------------------------
# Whole-sequence passes used by the pipeline


def eigenvector_elision_pass(
    seq: list[Instruction],
    chip: ChipSpecification,
    definitions: dict[str, DefGate] | None = None,
    limit: int = DEFAULT_ENTANGLEMENT_LIMIT,
) -> list[Instruction]:
    """Walk the sequence dropping gates that fix the tracked state."""
    state = initial_state()
    out: list[Instruction] = []
    for instr in seq:
        if isinstance(instr, Gate) and instr.is_concrete():
            tracked = all(state.tracked(q) for q in instr.qubits)
            if tracked:
                try:
                    m = gate_matrix(instr, definitions)
                    order, vec = state.joint_vector(instr.qubits)
                except (MatrixError, ValueError):
                    m = None
                if m is not None and len(order) <= limit:
                    positions = tuple(order.index(q) for q in instr.qubits)
                    nxt = apply_matrix(vec, m, positions, len(order))
                    if abs(abs(np.vdot(vec, nxt)) - 1.0) < EIGEN_TOL:
                        continue  # elided
        out.append(instr)
        _advance(state, instr, limit, definitions)
    return out


def state_prep_pass(
    seq: list[Instruction],
    chip: ChipSpecification,
    definitions: dict[str, DefGate] | None = None,
    limit: int = DEFAULT_ENTANGLEMENT_LIMIT,
    cost_mode: str = "duration",
) -> list[Instruction]:
    """Replace the leading fully-tracked segment with direct state preparation
    where that strictly lowers the (2Q count, total count) of the segment."""
    from .rules import sequence_cost

    state = initial_state()
    prefix_len = 0
    for instr in seq:
        if not isinstance(instr, Gate) or not instr.is_concrete():
            break
        before = set(state.unknown)
        _advance(state, instr, limit, definitions)
        if state.unknown - before:
            break
        prefix_len += 1
    if prefix_len == 0:
        return list(seq)
    prefix = [i for i in seq[:prefix_len] if isinstance(i, Gate)]

    # cluster prefix qubits that shared a gate; each cluster is independent
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for g in prefix:
        for q in g.qubits[1:]:
            parent[find(g.qubits[0])] = find(q)
    clusters: dict[int, list[int]] = {}
    for g in prefix:
        for q in g.qubits:
            clusters.setdefault(find(q), [])
            if q not in clusters[find(q)]:
                clusters[find(q)].append(q)

    replaced = list(prefix)
    for members in clusters.values():
        qubits = tuple(sorted(members))
        if len(qubits) > 2 or any(not state.tracked(q) for q in qubits):
            continue
        try:
            order, vec = state.joint_vector(qubits)
            prep = state_prep_resynthesize(vec, order, chip)
        except Exception:
            continue
        original = [g for g in replaced if set(g.qubits) <= set(qubits)]
        if sequence_cost(prep, chip, cost_mode) < sequence_cost(original, chip, cost_mode):
            kept = [g for g in replaced if not set(g.qubits) <= set(qubits)]
            replaced = prep + kept
    return replaced + list(seq[prefix_len:])
