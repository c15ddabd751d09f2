"""Addressing: map logical qubits onto the chip and insert SWAPs.

Consumes the instruction DAG greedily in topological order, maintaining a
partial logical-to-physical rewiring, a cost table of estimated movement
costs, and a buffer of emitted physical instructions.  Inserted SWAPs fuse
with trailing same-pair gates and are resynthesized whenever that is cheaper.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .chip import ChipSpecification, CostTable, build_cost_table, gate_unit_cost
from .dag import build_dag
from .ir import Gate, Instruction, Measure
from .kak import SWAP as SWAP_MATRIX
from .matrices import sequence_unitary
from .rules import RuleContext, lower_gate, nativize_gate, sequence_cost, synthesize_2q_native

DEFAULT_DISCOUNT = 0.5
DEFAULT_WINDOW = 20


class AddressingError(ValueError):
    pass


@dataclass
class Rewiring:
    """Partial bijection between logical and physical qubits."""

    l2p: dict[int, int] = field(default_factory=dict)
    p2l: dict[int, int] = field(default_factory=dict)

    def copy(self) -> "Rewiring":
        return Rewiring(dict(self.l2p), dict(self.p2l))

    def assign(self, logical: int, physical: int) -> None:
        if logical in self.l2p or physical in self.p2l:
            raise AddressingError(f"rewiring collision assigning {logical}->{physical}")
        self.l2p[logical] = physical
        self.p2l[physical] = logical

    def swap_physical(self, a: int, b: int) -> None:
        la, lb = self.p2l.get(a), self.p2l.get(b)
        for p in (a, b):
            self.p2l.pop(p, None)
        if la is not None:
            self.l2p[la] = b
            self.p2l[b] = la
        if lb is not None:
            self.l2p[lb] = a
            self.p2l[a] = lb

    def as_permutation(self) -> dict[int, int]:
        return dict(self.l2p)


@dataclass
class AddresserConfig:
    cost_mode: str = "duration"
    search_mode: str = "greedy"
    discount: float = DEFAULT_DISCOUNT
    lookahead_window: int = DEFAULT_WINDOW
    naive_rewiring: bool = False

    @staticmethod
    def default_for(chip: ChipSpecification) -> "AddresserConfig":
        # fidelity metadata present selects the fidelity/A* pairing
        if chip.has_fidelity_metadata():
            return AddresserConfig(cost_mode="fidelity", search_mode="a_star")
        return AddresserConfig()


@dataclass
class AddresserState:
    chip: ChipSpecification
    cost_table: CostTable
    config: AddresserConfig
    ctx: RuleContext
    rewiring: Rewiring = field(default_factory=Rewiring)
    output: list[Instruction] = field(default_factory=list)
    # where the content that entered at each physical position currently sits
    content_position: dict[int, int] = field(default_factory=dict)

    def movement_cost(self, p: int, q: int) -> float:
        """Cheapest plan cost to make p and q adjacent and run a 2Q gate."""
        best = math.inf
        d = self.cost_table.cost
        for (u, v) in self.chip.links:
            gate = gate_unit_cost(self.chip, u, v, self.config.cost_mode)
            best = min(best,
                       d(p, u) + d(q, v) + gate,
                       d(p, v) + d(q, u) + gate)
        return best

    def half_assigned_cost(self, p: int) -> float:
        free = [q for q in self.chip.qubits if q not in self.rewiring.p2l and q != p]
        if not free:
            return math.inf
        return min(self.movement_cost(p, q) for q in free)


def heuristic_cost(state: AddresserState, pending: list[Gate]) -> float:
    """Discounted cost of the pending gates under the current rewiring."""
    total = 0.0
    factor = 1.0
    d = state.config.discount
    for gate in pending:
        total += factor * _unit_cost(state, gate)
        factor *= d
    return total


def _unit_cost(state: AddresserState, gate: Gate) -> float:
    mode = state.config.cost_mode
    if len(gate.qubits) == 1:
        return 50.0 if mode == "duration" else 1e-6
    phys = [state.rewiring.l2p.get(q) for q in gate.qubits]
    if phys[0] is None and phys[1] is None:
        return min(
            gate_unit_cost(state.chip, a, b, mode) for (a, b) in state.chip.links
        )
    if phys[0] is None or phys[1] is None:
        known = phys[0] if phys[0] is not None else phys[1]
        return state.half_assigned_cost(known)
    return state.movement_cost(phys[0], phys[1])


def assign_fresh(state: AddresserState, logical: int, pending: list[Gate]) -> int:
    """Assign a logical qubit to the free physical qubit that minimizes the
    look-ahead cost; ties break toward the lowest physical index."""
    free = [q for q in sorted(state.chip.qubits) if q not in state.rewiring.p2l]
    if not free:
        raise AddressingError("chip exhausted: more logical than physical qubits")
    best_q, best_cost = None, None
    for q in free:
        state.rewiring.assign(logical, q)
        cost = heuristic_cost(state, pending)
        state.rewiring.l2p.pop(logical)
        state.rewiring.p2l.pop(q)
        if best_cost is None or cost < best_cost - 1e-12:
            best_q, best_cost = q, cost
    state.rewiring.assign(logical, best_q)
    return best_q


def _swap_edge_cost(state: AddresserState, a: int, b: int) -> float:
    return 3.0 * gate_unit_cost(state.chip, a, b, state.config.cost_mode)


def select_swaps(state: AddresserState, gate: Gate, pending: list[Gate]) -> list[tuple[int, int]]:
    """Physical SWAPs that make the gate's qubits adjacent."""
    pa, pb = (state.rewiring.l2p[q] for q in gate.qubits)
    if state.chip.has_link(pa, pb):
        return []
    if math.isinf(state.cost_table.cost(pa, pb)):
        raise AddressingError(f"qubits {pa} and {pb} lie in disconnected components")
    if state.config.search_mode == "a_star":
        return _astar_swaps(state, pa, pb)
    return _greedy_swaps(state, gate, pending)


def _astar_swaps(state: AddresserState, pa: int, pb: int) -> list[tuple[int, int]]:
    """Admissible A* over rewirings: h is the movement bound from the table."""
    chip = state.chip
    d = state.cost_table.cost
    links = sorted(chip.links)
    min_edge = min(_swap_edge_cost(state, a, b) for a, b in links)

    def h(pos: tuple[int, int]) -> float:
        hops = d(pos[0], pos[1])
        return max(0.0, hops - min_edge)  # last link needs no swap

    start = (pa, pb)
    best: dict[tuple[int, int], float] = {start: 0.0}
    heap: list[tuple[float, float, tuple[int, int], list[tuple[int, int]]]] = [
        (h(start), 0.0, start, [])
    ]
    while heap:
        f, g, pos, path = heapq.heappop(heap)
        if chip.has_link(*pos):
            return path
        if g > best.get(pos, math.inf):
            continue
        for (u, v) in links:
            npos = tuple(v if p == u else u if p == v else p for p in pos)
            if npos == pos:
                continue
            ng = g + _swap_edge_cost(state, u, v)
            if ng < best.get(npos, math.inf) - 1e-12:
                best[npos] = ng
                heapq.heappush(heap, (ng + h(npos), ng, npos, path + [(u, v)]))
    raise AddressingError("A* failed to connect the gate's qubits")


def _greedy_swaps(state: AddresserState, gate: Gate, pending: list[Gate]) -> list[tuple[int, int]]:
    """Iterated single-swap choice minimizing the look-ahead heuristic."""
    swaps: list[tuple[int, int]] = []
    last: tuple[int, int] | None = None
    limit = 4 * len(state.chip.qubits) + 8
    for _ in range(limit):
        pa, pb = (state.rewiring.l2p[q] for q in gate.qubits)
        if state.chip.has_link(pa, pb):
            for s in reversed(swaps):
                state.rewiring.swap_physical(*s)  # undo trial moves
            return swaps
        candidates = [
            (u, v) for (u, v) in sorted(state.chip.links)
            if (u in (pa, pb) or v in (pa, pb)) and (u, v) != last
        ]
        best_swap, best_score = None, None
        for (u, v) in candidates:
            state.rewiring.swap_physical(u, v)
            score = heuristic_cost(state, pending) + _swap_edge_cost(state, u, v)
            state.rewiring.swap_physical(u, v)
            if best_score is None or score < best_score - 1e-12:
                best_swap, best_score = (u, v), score
        state.rewiring.swap_physical(*best_swap)
        swaps.append(best_swap)
        last = best_swap
    for s in reversed(swaps):
        state.rewiring.swap_physical(*s)
    return _astar_swaps(state, *(state.rewiring.l2p[q] for q in gate.qubits))


def _trailing_pair_run(output: list[Instruction], a: int, b: int) -> int:
    """Length of the trailing run acting only inside {a, b} with >= one 2Q gate."""
    pair = {a, b}
    i = len(output)
    has_2q = False
    while i > 0:
        instr = output[i - 1]
        if not isinstance(instr, Gate) or not instr.is_concrete():
            break
        if not set(instr.qubits) <= pair:
            break
        if len(instr.qubits) == 2:
            has_2q = True
        i -= 1
    return len(output) - i if has_2q else 0


def emit_swap(state: AddresserState, a: int, b: int) -> None:
    """Emit a physical SWAP natively, fusing with a trailing same-pair run
    when the resynthesized block is cheaper (SWAP recombination)."""
    chip, mode = state.chip, state.config.cost_mode
    swap_native = synthesize_2q_native(SWAP_MATRIX, a, b, chip, mode)
    run_len = _trailing_pair_run(state.output, a, b)
    replaced = False
    if run_len:
        run = [g for g in state.output[-run_len:]]
        u = SWAP_MATRIX @ sequence_unitary(run, [a, b], state.ctx.definitions)
        try:
            fused = synthesize_2q_native(u, a, b, chip, mode)
        except Exception:
            fused = None
        if fused is not None:
            old = sequence_cost(run, chip, mode)
            new = sequence_cost(fused, chip, mode)
            base = sequence_cost(run + swap_native, chip, mode)
            if new < base:
                state.output[-run_len:] = fused
                replaced = True
    if not replaced:
        state.output.extend(swap_native)
    state.rewiring.swap_physical(a, b)
    pos = state.content_position
    inv = {pos.get(w, w): w for w in set(pos) | {a, b}}
    wa, wb = inv.get(a, a), inv.get(b, b)
    pos[wa], pos[wb] = b, a


def _pending_window(remaining: list[int], instructions: list[Instruction],
                    window: int) -> list[Gate]:
    out = []
    for idx in remaining:
        instr = instructions[idx]
        if isinstance(instr, Gate):
            out.append(instr)
            if len(out) >= window:
                break
    return out


def _logical_degrees(block: list[Instruction]) -> dict[int, int]:
    degrees: dict[int, int] = {}
    for instr in block:
        if isinstance(instr, Gate) and len(instr.qubits) == 2:
            for q in instr.qubits:
                degrees[q] = degrees.get(q, 0) + 1
    return degrees


def _seed_strategies(block: list[Instruction], chip: ChipSpecification,
                     entry: Rewiring | None, seed: int | None) -> list[dict[int, int]]:
    """Candidate pre-assignments to try before lazy placement takes over:
    nothing seeded, or one high-traffic logical pinned to the best-connected
    physical qubit (degree ties make the right hub ambiguous, so the top few
    candidates are each tried)."""
    strategies: list[dict[int, int]] = [{}]
    taken_l = set(entry.l2p) if entry else set()
    taken_p = set(entry.p2l) if entry else set()
    degrees = _logical_degrees(block)
    free_logical = [q for q in sorted(degrees) if q not in taken_l]
    free_phys = [p for p in sorted(chip.qubits) if p not in taken_p]
    if free_logical and free_phys:
        phys_deg = {p: len(chip.neighbors(p)) for p in free_phys}
        hub_p = max(free_phys, key=lambda p: (phys_deg[p], -p))
        ranked = sorted(free_logical, key=lambda q: (-degrees[q], q))
        for hub_l in ranked[:3]:
            strategies.append({hub_l: hub_p})
        if seed is not None:
            import random

            rng = random.Random(seed)
            for _ in range(3):
                strategies.append({rng.choice(free_logical): rng.choice(free_phys)})
    return strategies


def address_block(
    block: list[Instruction],
    chip: ChipSpecification,
    config: AddresserConfig | None = None,
    ctx: RuleContext | None = None,
    entry_rewiring: Rewiring | None = None,
    seed: int | None = None,
) -> tuple[list[Instruction], Rewiring, Rewiring]:
    """Compile one straight-line block to native, adjacency-satisfying form.

    Returns (physical instructions, entry rewiring, exit rewiring).  The entry
    rewiring extends the supplied one with any lazily created assignments, so
    callers see the complete placement the block assumed.  Several initial
    placement seeds are tried; the cheapest addressed output wins.
    """
    config = config or AddresserConfig.default_for(chip)
    ctx = ctx or RuleContext(chip)
    ctx.cost_mode = config.cost_mode

    lowered: list[Instruction] = []
    for instr in block:
        if isinstance(instr, Gate) and len(instr.qubits) > 4:
            raise AddressingError(f"gate arity {len(instr.qubits)} exceeds 4: {instr}")
        if isinstance(instr, Gate) and len(instr.qubits) in (3, 4):
            lowered.extend(lower_gate(instr, ctx))
        else:
            lowered.append(instr)

    from .compressor import compress  # candidate ranking sees post-compression cost

    best = None
    best_cost = None
    for seeds in _seed_strategies(lowered, chip, entry_rewiring, seed):
        try:
            result = _address_once(lowered, chip, config, ctx, entry_rewiring, seeds)
        except AddressingError:
            continue
        cost = sequence_cost(compress(result[0], chip, ctx), chip, config.cost_mode)
        if best_cost is None or cost < best_cost:
            best, best_cost = result, cost
    if best is None:
        # re-run the plain strategy to surface its error
        return _address_once(lowered, chip, config, ctx, entry_rewiring, {})
    return best


def _address_once(
    lowered: list[Instruction],
    chip: ChipSpecification,
    config: AddresserConfig,
    ctx: RuleContext,
    entry_rewiring: Rewiring | None,
    seeds: dict[int, int],
) -> tuple[list[Instruction], Rewiring, Rewiring]:
    cost_table = build_cost_table(chip, config.cost_mode)
    state = AddresserState(chip, cost_table, config, ctx,
                           entry_rewiring.copy() if entry_rewiring else Rewiring())
    for logical, phys in seeds.items():
        state.rewiring.assign(logical, phys)

    if config.naive_rewiring:
        for q in sorted({q for i in lowered if isinstance(i, Gate) for q in i.qubits}
                        | {i.qubit for i in lowered if isinstance(i, Measure)}):
            if q not in state.rewiring.l2p:
                if q not in chip.qubits:
                    raise AddressingError(f"naive rewiring: qubit {q} not on chip")
                state.rewiring.assign(q, q)

    dag = build_dag(lowered)
    indeg = [len(p) for p in dag.predecessors]
    ready = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(ready)
    done: set[int] = set()
    topo = dag.topological_order()

    def finish(idx: int) -> None:
        done.add(idx)
        for j in dag.successors[idx]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)

    def pending_from(idx: int | None) -> list[Gate]:
        rest = [i for i in topo if i not in done]
        if idx is not None and idx in rest:
            rest.remove(idx)
            rest.insert(0, idx)
        return _pending_window(rest, lowered, config.lookahead_window)

    while ready:
        stuck = []
        progressed = False
        while ready:
            idx = heapq.heappop(ready)
            instr = lowered[idx]
            if isinstance(instr, Measure):
                if instr.qubit not in state.rewiring.l2p:
                    assign_fresh(state, instr.qubit, pending_from(idx))
                state.output.append(Measure(state.rewiring.l2p[instr.qubit], instr.target))
                finish(idx)
                progressed = True
                continue
            if not isinstance(instr, Gate):
                state.output.append(instr)
                finish(idx)
                progressed = True
                continue
            pend = pending_from(idx)
            for q in instr.qubits:
                if q not in state.rewiring.l2p:
                    assign_fresh(state, q, pend)
            phys = tuple(state.rewiring.l2p[q] for q in instr.qubits)
            if len(phys) == 2 and not chip.has_link(*phys):
                stuck.append(idx)
                continue
            physical_gate = Gate(instr.name, instr.params, phys)
            state.output.extend(nativize_gate(physical_gate, ctx))
            finish(idx)
            progressed = True
        if stuck and not progressed:
            idx = min(stuck)
            for a, b in select_swaps(state, lowered[idx], pending_from(idx)):
                emit_swap(state, a, b)
        for idx in stuck:
            heapq.heappush(ready, idx)
        if not stuck and not progressed:
            break

    if len(done) != len(lowered):
        raise AddressingError("addresser failed to consume the whole block")
    entry = entry_rewiring.copy() if entry_rewiring else Rewiring()
    # lazily created assignments belong to the entry placement, minus the
    # effect of the swaps recorded in content_position
    exit_rw = state.rewiring
    entry_full = _entry_placement(entry, exit_rw, state.content_position)
    return state.output, entry_full, exit_rw


def _entry_placement(entry: Rewiring, exit_rw: Rewiring,
                     content_position: dict[int, int]) -> Rewiring:
    """Recover where each logical qubit started: invert the swap history."""
    result = entry.copy()
    position_of = dict(content_position)
    for logical, phys_now in exit_rw.l2p.items():
        if logical in result.l2p:
            continue
        start = phys_now
        for w, p in position_of.items():
            if p == phys_now:
                start = w
                break
        if start in result.p2l:
            raise AddressingError("entry placement reconstruction collision")
        result.assign(logical, start)
    return result
