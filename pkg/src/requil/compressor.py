"""Compression: resource-tagged subgraph accumulation plus peephole rewriting.

The walk gathers instructions into subgraphs tagged by the union of their
resources, bounded by a qubit limit and a forbidden-collection set.  Flushed
subgraphs are linearized and handed to the peephole rewriter, whose passes
are: algebraic rules, commutation-aware regrouping, one-qubit run fusion, and
two-qubit run fusion with matrix resynthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chip import ChipSpecification
from .dag import Resource, instruction_resources
from .ir import Gate, Instruction, Measure
from .matrices import sequence_unitary
from .rules import (
    RULE_CATALOG,
    RuleContext,
    get_rule,
    nativize_gate,
    sequence_cost,
    synthesize_2q_native,
)

DEFAULT_COMPRESSION_LIMIT = 3
REWALK_ROUNDS = 3
ROLLUP_3Q_THRESHOLD = 8

PEEPHOLE_RULES = (
    "eliminate-full-CPHASE",
    "eliminate-zero-rotation",
    "agglutinate-RZs",
    "agglutinate-RXs",
)

_DIAGONAL_1Q = {"RZ", "Z", "S", "T"}
_DIAGONAL_2Q = {"CZ", "CPHASE"}


def _acts_diagonally(instr: Instruction, qubit: int) -> bool:
    if not isinstance(instr, Gate):
        return False
    if instr.name in _DIAGONAL_1Q or instr.name in _DIAGONAL_2Q:
        return True
    if instr.name == "CNOT":
        return qubit == instr.qubits[0]  # diagonal on the control
    return False


def _commutation_dag(seq: list[Instruction]) -> tuple[list[list[int]], list[int]]:
    """Successor lists and in-degrees; same-qubit users are unordered when
    both act diagonally on the shared qubit."""
    n = len(seq)
    succ: list[set[int]] = [set() for _ in range(n)]
    last_blocker: dict[Resource, int] = {}
    open_diagonal: dict[Resource, list[int]] = {}
    for i, instr in enumerate(seq):
        for res in instruction_resources(instr):
            diagonal = res[0] == "q" and _acts_diagonally(instr, res[1])
            if diagonal:
                if res in last_blocker:
                    succ[last_blocker[res]].add(i)
                open_diagonal.setdefault(res, []).append(i)
            else:
                waiting = open_diagonal.pop(res, [])
                for j in waiting:
                    succ[j].add(i)
                if not waiting and res in last_blocker:
                    succ[last_blocker[res]].add(i)
                last_blocker[res] = i
    indeg = [0] * n
    for i in range(n):
        succ[i].discard(i)
        for j in succ[i]:
            indeg[j] += 1
    return [sorted(s) for s in succ], indeg


def _grouped_linearize(seq: list[Instruction]) -> list[Instruction]:
    """Topological order grouping instructions by qubit set, which brings
    commuting same-pair and same-qubit gates together for the fusers."""
    succ, indeg = _commutation_dag(seq)
    import heapq

    def key(i: int) -> tuple:
        instr = seq[i]
        qs = tuple(sorted(instr.qubits)) if isinstance(instr, Gate) else (-1,)
        return (qs, i)

    ready = [key(i) for i in range(len(seq)) if indeg[i] == 0]
    heapq.heapify(ready)
    out: list[Instruction] = []
    while ready:
        k = heapq.heappop(ready)
        i = k[-1]
        out.append(seq[i])
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, key(j))
    return out


def _apply_rule_pass(seq: list[Instruction], ctx: RuleContext) -> tuple[list[Instruction], bool]:
    """One sweep of the windowed algebraic rules; returns (sequence, changed)."""
    rules = [get_rule(name) for name in PEEPHOLE_RULES]
    changed = False
    i = 0
    out = list(seq)
    while i < len(out):
        applied = False
        for rule in rules:
            k = rule.input_arity
            if i + k > len(out):
                continue
            result = rule.apply(out[i : i + k], ctx)
            if result is not None:
                out[i : i + k] = result
                changed = True
                applied = True
                i = max(0, i - 1)
                break
        if not applied:
            i += 1
    return out, changed


def _fuse_1q_runs(seq: list[Instruction], ctx: RuleContext) -> tuple[list[Instruction], bool]:
    from .euler import native_1q_sequence
    from .matrices import gate_matrix

    out: list[Instruction] = []
    changed = False
    i = 0
    while i < len(seq):
        instr = seq[i]
        if not (isinstance(instr, Gate) and len(instr.qubits) == 1 and instr.is_concrete()):
            out.append(instr)
            i += 1
            continue
        q = instr.qubits[0]
        j = i
        while j < len(seq) and isinstance(seq[j], Gate) and seq[j].qubits == (q,) \
                and seq[j].is_concrete():
            j += 1
        run = seq[i:j]
        if len(run) >= 2:
            u = np.eye(2, dtype=complex)
            for g in run:
                u = gate_matrix(g, ctx.definitions) @ u
            try:
                fused = native_1q_sequence(u, q, ctx.chip)
            except ValueError:
                fused = None
            if fused is not None and len(fused) < len(run):
                out.extend(fused)
                changed = True
                i = j
                continue
        out.extend(run)
        i = j
    return out, changed


def _collect_pair_run(seq: list[Instruction], start: int, pair: set[int]) -> int:
    """End index of the contiguous run from ``start`` acting inside ``pair``."""
    j = start
    while j < len(seq):
        instr = seq[j]
        if not isinstance(instr, Gate) or not instr.is_concrete():
            break
        if not set(instr.qubits) <= pair:
            break
        j += 1
    return j


def rollup_resynthesize(seq: list[Instruction], chip: ChipSpecification,
                        ctx: RuleContext) -> tuple[list[Instruction], bool]:
    """Fuse same-pair runs into matrices and resynthesize when strictly better."""
    out: list[Instruction] = []
    changed = False
    i = 0
    while i < len(seq):
        instr = seq[i]
        if not (isinstance(instr, Gate) and len(instr.qubits) == 2 and instr.is_concrete()
                and chip.has_link(*instr.qubits)):
            out.append(instr)
            i += 1
            continue
        pair = set(instr.qubits)
        # absorb immediately preceding gates already confined to the pair
        k = len(out)
        while k > 0 and isinstance(out[k - 1], Gate) and out[k - 1].is_concrete() \
                and set(out[k - 1].qubits) <= pair:
            k -= 1
        pre = out[k:]
        j = _collect_pair_run(seq, i, pair)
        run = pre + seq[i:j]
        qa, qb = sorted(pair)
        u = sequence_unitary(run, [qa, qb], ctx.definitions)
        try:
            fused = synthesize_2q_native(u, qa, qb, chip, ctx.cost_mode)
        except Exception:
            fused = None
        if fused is not None and sequence_cost(fused, chip, ctx.cost_mode) < \
                sequence_cost(run, chip, ctx.cost_mode):
            del out[k:]
            out.extend(fused)
            changed = True
            i = j
            continue
        out.append(instr)
        i += 1
    return out, changed


def _rollup_3q(seq: list[Instruction], chip: ChipSpecification,
               ctx: RuleContext) -> tuple[list[Instruction], bool]:
    """Whole-window resynthesis for three-qubit windows via generic synthesis."""
    gates = [g for g in seq if isinstance(g, Gate)]
    if len(gates) != len(seq) or any(not g.is_concrete() for g in gates):
        return seq, False
    qubits = sorted({q for g in gates for q in g.qubits})
    if len(qubits) != 3:
        return seq, False
    n2 = sum(1 for g in gates if len(g.qubits) == 2)
    if n2 <= ROLLUP_3Q_THRESHOLD:
        return seq, False
    from .generic import generic_synthesize_matrix

    u = sequence_unitary(gates, qubits, ctx.definitions)
    try:
        candidate: list[Instruction] = []
        for g in generic_synthesize_matrix(u, qubits):
            candidate.extend(nativize_gate(g, ctx))
    except Exception:
        return seq, False
    if sequence_cost(candidate, chip, ctx.cost_mode) < sequence_cost(seq, chip, ctx.cost_mode):
        return candidate, True
    return seq, False


def peephole(seq: list[Instruction], ctx: RuleContext,
             max_rounds: int = 40) -> list[Instruction]:
    """Fixpoint of rule application, regrouping, and run fusion.

    Terminates because every accepted rewrite strictly decreases the
    (2Q count, total count, unit cost) measure, except regrouping, which is
    applied once per round and cannot cycle by itself.
    """
    chip = ctx.chip
    current = list(seq)
    for _ in range(max_rounds):
        changed = False
        current, c = _apply_rule_pass(current, ctx)
        changed |= c
        regrouped = _grouped_linearize(current)
        current = regrouped
        current, c = _fuse_1q_runs(current, ctx)
        changed |= c
        current, c = rollup_resynthesize(current, chip, ctx)
        changed |= c
        if not changed:
            break
    current, _ = _rollup_3q(current, chip, ctx)
    return current


@dataclass
class Subgraph:
    members: list[Instruction] = field(default_factory=list)
    tag: frozenset = frozenset()


@dataclass
class _WalkState:
    ctx: RuleContext
    limit: int
    subgraphs: list[Subgraph] = field(default_factory=list)
    forbidden: set[frozenset] = field(default_factory=set)
    output: list[Instruction] = field(default_factory=list)


def _qubit_count(tag: frozenset) -> int:
    return sum(1 for r in tag if r[0] == "q")


def _contains_forbidden(tag: frozenset, forbidden: set[frozenset]) -> bool:
    return any(f <= tag for f in forbidden)


def _flush_subgraph(state: _WalkState, subgraph: Subgraph, depth: int) -> None:
    emitted = peephole(subgraph.members, state.ctx)
    if depth < REWALK_ROUNDS:
        _walk(emitted, state, depth + 1)
    else:
        state.output.extend(emitted)


def _walk(instructions: list[Instruction], state: _WalkState, depth: int) -> None:
    for instr in instructions:
        res = frozenset(instruction_resources(instr))
        if not res:  # no-resource instructions (pragmas) pass straight through
            state.output.append(instr)
            continue
        meets = [sg for sg in state.subgraphs if sg.tag & res]
        if not meets and not _contains_forbidden(res, state.forbidden) \
                and _qubit_count(res) <= state.limit and not isinstance(instr, Measure):
            state.subgraphs.append(Subgraph([instr], res))
            continue
        total = res
        for sg in meets:
            total |= sg.tag
        overflow = (
            _contains_forbidden(total, state.forbidden)
            or _qubit_count(total) > state.limit
            or isinstance(instr, Measure)
        )
        if overflow:
            for sg in meets:
                added: list[frozenset] = []
                if _contains_forbidden(total, state.forbidden):
                    state.forbidden.add(sg.tag)
                    added.append(sg.tag)
                if _qubit_count(total) > state.limit:
                    state.forbidden.add(total)
                    added.append(total)
                state.subgraphs.remove(sg)
                _flush_subgraph(state, sg, depth)
                for f in added:
                    state.forbidden.discard(f)
            # the re-walk may have formed fresh subgraphs meeting this
            # instruction; they are written out with it
            for sg in [s for s in state.subgraphs if s.tag & res]:
                state.subgraphs.remove(sg)
                state.output.extend(peephole(sg.members, state.ctx))
            state.output.append(instr)
        else:
            merged = Subgraph([], total)
            for sg in meets:
                merged.members.extend(sg.members)
                state.subgraphs.remove(sg)
            merged.members.append(instr)
            state.subgraphs.append(merged)


def compress(seq: list[Instruction], chip: ChipSpecification,
             ctx: RuleContext | None = None,
             limit: int = DEFAULT_COMPRESSION_LIMIT) -> list[Instruction]:
    """Run the compression walk to a structural fixpoint."""
    ctx = ctx or RuleContext(chip)
    current = list(seq)
    for _ in range(6):
        state = _WalkState(ctx, limit)
        _walk(current, state, depth=0)
        for sg in list(state.subgraphs):
            state.subgraphs.remove(sg)
            _flush_subgraph(state, sg, depth=REWALK_ROUNDS)
        if state.output == current:
            break
        current = state.output
    return current
