"""Compilation subroutines: a registry of partial rewrite rules.

Each rule consumes a fixed number of instructions and either emits a
replacement sequence or signals inapplicability by returning ``None``.  Rules
declare input/output gate shapes so the compiler can classify them per chip
as nativizers (single instruction whose outputs reach the native set, possibly
by chaining) or optimizers (native-to-native, not worse).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chip import ChipSpecification, NativeStatus, gate_unit_cost, is_native
from .euler import native_1q_sequence, zyz_gates
from .generic import ccnot_template, generic_synthesize_matrix
from .ir import DefGate, Gate, Instruction
from .kak import (
    Item,
    SynthesisError,
    cnot_basis_circuit,
    two_qubit_candidates,
)
from .matrices import MatrixError, gate_matrix
from .params import ParamExpr

ZERO_ROTATION_TOL = 1e-10
FULL_TURN_TOL = 1e-10

# a gate shape is (operator-or-"*", arity); for single-instruction rules the
# declared input shapes are alternatives, for wider rules they are per slot
Shape = tuple[str, int]


@dataclass
class RuleContext:
    chip: ChipSpecification
    definitions: dict[str, DefGate] = field(default_factory=dict)
    ccnot_template_enabled: bool = True
    state_prep_enabled: bool = False
    cost_mode: str = "duration"
    state = None  # PartialState annotation for state-aware rules


@dataclass
class RewriteRule:
    name: str
    input_arity: int
    input_shapes: tuple[Shape, ...]
    apply: Callable[[list[Instruction], RuleContext], list[Instruction] | None]
    output_shapes: Callable[[ChipSpecification], set[Shape]] | frozenset | set = frozenset()
    state_aware: bool = False
    total: bool = False  # applicable to every instruction matching the shapes

    def outputs_for(self, chip: ChipSpecification) -> set[Shape]:
        if callable(self.output_shapes):
            return self.output_shapes(chip)
        return set(self.output_shapes)


def _p(x: float) -> tuple[ParamExpr, ...]:
    return (ParamExpr(x),)


def _gate(instr: Instruction, name: str | None = None) -> Gate | None:
    if not isinstance(instr, Gate):
        return None
    if name is not None and instr.name != name:
        return None
    return instr


def _angle_is_zero_mod_2pi(theta: float, tol: float) -> bool:
    r = theta % (2 * math.pi)
    return min(r, 2 * math.pi - r) < tol


# ---------------------------------------------------------------------------
# Algebraic rules


def _agglutinate(axis: str):
    def apply(window, ctx):
        x, y = _gate(window[0], axis), _gate(window[1], axis)
        if x is None or y is None or x.qubits != y.qubits:
            return None
        return [Gate(axis, (x.params[0] + y.params[0],), x.qubits)]

    return apply


def _eliminate_zero_rotation(window, ctx):
    g = _gate(window[0])
    if g is None or g.name not in ("RZ", "RX", "RY") or not g.is_concrete():
        return None
    if _angle_is_zero_mod_2pi(g.params[0].value, ZERO_ROTATION_TOL):
        return []
    return None


def _eliminate_full_cphase(window, ctx):
    g = _gate(window[0], "CPHASE")
    if g is None or not g.is_concrete():
        return None
    if _angle_is_zero_mod_2pi(g.params[0].value, FULL_TURN_TOL):
        return []
    return None


def _commute_rz_cz(window, ctx):
    rz, cz = _gate(window[0], "RZ"), _gate(window[1], "CZ")
    if rz is None or cz is None or rz.qubits[0] not in cz.qubits:
        return None
    return [cz, rz]


def _commute_diagonal_cphase(window, ctx):
    diag, cp = _gate(window[0]), _gate(window[1], "CPHASE")
    if diag is None or cp is None:
        return None
    if diag.name not in ("RZ", "Z", "S", "T") or diag.qubits[0] not in cp.qubits:
        return None
    return [cp, diag]


def _cnot_to_cz(window, ctx):
    g = _gate(window[0], "CNOT")
    if g is None:
        return None
    a, b = g.qubits
    return [Gate("H", (), (b,)), Gate("CZ", (), (a, b)), Gate("H", (), (b,))]


def _swap_to_cnots(window, ctx):
    g = _gate(window[0], "SWAP")
    if g is None:
        return None
    a, b = g.qubits
    return [Gate("CNOT", (), (a, b)), Gate("CNOT", (), (b, a)), Gate("CNOT", (), (a, b))]


def cphase_to_cz_template(theta: ParamExpr, p: int, q: int) -> list[Gate]:
    """CPHASE(theta) p q over two CZs, keeping theta symbolic."""
    half = theta.scale(0.5)
    pi2 = math.pi / 2
    return [
        Gate("RZ", _p(-pi2), (q,)),
        Gate("RX", _p(pi2), (q,)),
        Gate("CZ", (), (q, p)),
        Gate("RX", _p(-pi2), (q,)),
        Gate("RZ", (-half,), (q,)),
        Gate("RX", _p(pi2), (q,)),
        Gate("CZ", (), (q, p)),
        Gate("RZ", (half,), (p,)),
        Gate("RX", _p(-pi2), (q,)),
        Gate("RZ", (half + ParamExpr(pi2),), (q,)),
    ]


def _cphase_template_rule(window, ctx):
    g = _gate(window[0], "CPHASE")
    if g is None:
        return None
    return cphase_to_cz_template(g.params[0], g.qubits[0], g.qubits[1])


def _ccnot_rule(window, ctx):
    g = _gate(window[0], "CCNOT")
    if g is None or not ctx.ccnot_template_enabled:
        return None
    return ccnot_template(*g.qubits)


def _zyz_rule(window, ctx):
    g = _gate(window[0])
    if g is None or len(g.qubits) != 1 or not g.is_concrete():
        return None
    try:
        return zyz_gates(gate_matrix(g, ctx.definitions), g.qubits[0])
    except MatrixError:
        return None


def _kak_rule(window, ctx):
    g = _gate(window[0])
    if g is None or len(g.qubits) != 2 or not g.is_concrete():
        return None
    try:
        u = gate_matrix(g, ctx.definitions)
        items = cnot_basis_circuit(u, g.qubits[0], g.qubits[1])
    except (MatrixError, SynthesisError):
        return None
    return _items_as_plain_gates(items)


def _generic_rule(window, ctx):
    g = _gate(window[0])
    if g is None or len(g.qubits) not in (3, 4) or not g.is_concrete():
        return None
    try:
        u = gate_matrix(g, ctx.definitions)
    except MatrixError:
        return None
    return generic_synthesize_matrix(u, list(g.qubits))


def _native_1q_form_rule(window, ctx):
    g = _gate(window[0])
    if g is None or len(g.qubits) != 1 or not g.is_concrete():
        return None
    try:
        m = gate_matrix(g, ctx.definitions)
        return native_1q_sequence(m, g.qubits[0], ctx.chip)
    except (MatrixError, ValueError):
        return None


def _native_2q_form_rule(window, ctx):
    g = _gate(window[0])
    if g is None or len(g.qubits) != 2 or not g.is_concrete():
        return None
    if not ctx.chip.has_link(*g.qubits):
        return None
    try:
        u = gate_matrix(g, ctx.definitions)
        return synthesize_2q_native(u, g.qubits[0], g.qubits[1], ctx.chip, ctx.cost_mode)
    except (MatrixError, SynthesisError, EmissionError):
        return None


def _fuse_2q_pair_rule(window, ctx):
    """Pairwise case of 2Q-block fusion: resynthesize two same-pair gates."""
    x, y = _gate(window[0]), _gate(window[1])
    if x is None or y is None or len(x.qubits) != 2 or len(y.qubits) != 2:
        return None
    if set(x.qubits) != set(y.qubits) or not (x.is_concrete() and y.is_concrete()):
        return None
    qa, qb = x.qubits
    if not ctx.chip.has_link(qa, qb):
        return None
    from .matrices import sequence_unitary

    u = sequence_unitary([x, y], [qa, qb], ctx.definitions)
    try:
        fused = synthesize_2q_native(u, qa, qb, ctx.chip, ctx.cost_mode)
    except (SynthesisError, EmissionError):
        return None
    if sequence_cost(fused, ctx.chip, ctx.cost_mode) < sequence_cost([x, y], ctx.chip, ctx.cost_mode):
        return fused
    return None


def _elide_on_eigenvector_rule(window, ctx):
    from .statesim import elide_on_eigenvector

    return elide_on_eigenvector(window[0], ctx)


def _items_as_plain_gates(items: list[Item]) -> list[Gate]:
    out: list[Gate] = []
    for item in items:
        if item[0] == "1q":
            out.extend(zyz_gates(item[2], item[1]))
        else:
            _, op, theta, qubits = item
            params = _p(theta) if theta is not None else ()
            out.append(Gate(op, params, qubits))
    return out


def _native_1q_shapes(chip: ChipSpecification) -> set[Shape]:
    return {(r.operator, 1) for rec in chip.qubits.values() for r in rec.gates}


def _native_2q_shapes(chip: ChipSpecification) -> set[Shape]:
    return {(r.operator, 2) for rec in chip.links.values() for r in rec.gates}


def _native_shapes(chip: ChipSpecification) -> set[Shape]:
    return _native_1q_shapes(chip) | _native_2q_shapes(chip)


# ---------------------------------------------------------------------------
# Classification


def _covers(pattern: Shape, shape: Shape) -> bool:
    return pattern[1] == shape[1] and pattern[0] in ("*", shape[0])


def _shape_native(shape: Shape, chip: ChipSpecification) -> bool:
    return shape[0] != "*" and shape in _native_shapes(chip) | {("I", 1)}


def _resolvable_shapes(chip: ChipSpecification) -> set[Shape]:
    """Fixpoint of shapes that chains of total single-instruction rules can
    drive into the chip's native set."""
    universe: set[Shape] = set(_native_shapes(chip))
    for r in RULE_CATALOG:
        universe |= set(r.input_shapes) | set(r.outputs_for(chip))
    resolved = {s for s in universe if _shape_native(s, chip)}
    chains = [r for r in RULE_CATALOG if r.input_arity == 1 and r.total]
    changed = True
    while changed:
        changed = False
        for s in universe - resolved:
            for r in chains:
                if any(_covers(p, s) for p in r.input_shapes):
                    outs = r.outputs_for(chip)
                    if all(o in resolved or _shape_native(o, chip) for o in outs):
                        resolved.add(s)
                        changed = True
                        break
    return resolved


def classify_rule(rule: RewriteRule, chip: ChipSpecification) -> str:
    """'nativizer', 'optimizer', or 'neither' for this chip."""
    resolved = _resolvable_shapes(chip)

    def resolvable(s: Shape) -> bool:
        return _shape_native(s, chip) or s in resolved or ("*", s[1]) in resolved

    outs = rule.outputs_for(chip)
    outs_ok = all(resolvable(s) for s in outs)
    ins_native = all(_shape_native(s, chip) for s in rule.input_shapes)
    if ins_native and outs_ok:
        in_cost = (sum(1 for s in rule.input_shapes if s[1] >= 2),
                   max(len(rule.input_shapes), rule.input_arity))
        out_cost = (sum(1 for s in outs if s[1] >= 2), len(outs))
        if out_cost <= in_cost:
            return "optimizer"
    if rule.input_arity == 1 and outs_ok:
        return "nativizer"
    return "neither"


# ---------------------------------------------------------------------------
# Emission of synthesis items in chip-native form


class EmissionError(ValueError):
    pass


_H2 = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def _link_ops(chip: ChipSpecification, a: int, b: int) -> set[str]:
    ops: set[str] = set()
    for rec in chip.link(a, b).gates:
        if rec.operator in ("CZ", "CNOT", "ISWAP"):
            ops.add(rec.operator)
        elif rec.operator == "CPHASE":
            if rec.parameters and rec.parameters[0] == "_":
                ops.add("CPHASE")
            elif rec.parameters and abs(float(rec.parameters[0]) - math.pi) < 1e-9:
                ops.add("CZ")  # fixed CPHASE(pi) is exactly a CZ
    return ops


class _Emitter:
    """Accumulates pending 1Q matrices, flushing them in shortest native form."""

    def __init__(self, chip: ChipSpecification):
        self.chip = chip
        self.pending: dict[int, np.ndarray] = {}
        self.out: list[Gate] = []

    def push_1q(self, q: int, m: np.ndarray) -> None:
        self.pending[q] = m @ self.pending.get(q, np.eye(2, dtype=complex))

    def flush(self, *qubits: int) -> None:
        for q in qubits:
            m = self.pending.pop(q, None)
            if m is not None:
                self.out.extend(native_1q_sequence(m, q, self.chip))

    def _emit(self, gate: Gate) -> None:
        self.flush(*gate.qubits)
        self.out.append(gate)

    def emit_2q(self, op: str, theta: float | None, qa: int, qb: int) -> None:
        if op == "CPHASE":
            # CPHASE is symmetric; use whichever argument order the record has
            for g in (Gate("CPHASE", _p(theta), (qa, qb)),
                      Gate("CPHASE", _p(theta), (qb, qa))):
                if is_native(self.chip, g) is NativeStatus.NATIVE:
                    self._emit(g)
                    return
            raise EmissionError(f"CPHASE({theta}) is not native on link {qa}-{qb}")
        if op == "ISWAP":
            for g in (Gate("ISWAP", (), (qa, qb)), Gate("ISWAP", (), (qb, qa))):
                if is_native(self.chip, g) is NativeStatus.NATIVE:
                    self._emit(g)
                    return
            raise EmissionError(f"ISWAP is not native on link {qa}-{qb}")
        if op == "CNOT":
            if is_native(self.chip, Gate("CNOT", (), (qa, qb))) is NativeStatus.NATIVE:
                self._emit(Gate("CNOT", (), (qa, qb)))
            elif is_native(self.chip, Gate("CNOT", (), (qb, qa))) is NativeStatus.NATIVE:
                for q in (qa, qb):  # reverse direction with Hadamards
                    self.push_1q(q, _H2)
                self._emit(Gate("CNOT", (), (qb, qa)))
                for q in (qa, qb):
                    self.push_1q(q, _H2)
            else:  # CNOT = (I x H) CZ (I x H)
                self.push_1q(qb, _H2)
                self._emit_czlike(qa, qb)
                self.push_1q(qb, _H2)
            return
        if op == "CZ":
            self._emit_czlike(qa, qb)
            return
        raise EmissionError(f"unknown entangler {op}")

    def _emit_czlike(self, qa: int, qb: int) -> None:
        for g in (Gate("CZ", (), (qa, qb)), Gate("CZ", (), (qb, qa))):
            if is_native(self.chip, g) is NativeStatus.NATIVE:
                self._emit(g)
                return
        for g in (Gate("CPHASE", _p(math.pi), (qa, qb)),
                  Gate("CPHASE", _p(math.pi), (qb, qa))):
            if is_native(self.chip, g) is NativeStatus.NATIVE:
                self._emit(g)
                return
        for ctrl, tgt in ((qa, qb), (qb, qa)):
            if is_native(self.chip, Gate("CNOT", (), (ctrl, tgt))) is NativeStatus.NATIVE:
                self.push_1q(tgt, _H2)
                self._emit(Gate("CNOT", (), (ctrl, tgt)))
                self.push_1q(tgt, _H2)
                return
        raise EmissionError(f"no CZ-like native gate on link {qa}-{qb}")


def emit_items(items: list[Item], chip: ChipSpecification) -> list[Gate]:
    """Convert synthesis items to an all-native gate list."""
    em = _Emitter(chip)
    for item in items:
        if item[0] == "1q":
            em.push_1q(item[1], item[2])
        else:
            _, op, theta, (qa, qb) = item
            em.emit_2q(op, theta, qa, qb)
    em.flush(*sorted(em.pending))
    return em.out


def sequence_cost(gates: list[Instruction], chip: ChipSpecification,
                  mode: str = "duration") -> tuple[int, int, float]:
    """(2Q count, total count, summed unit cost): the optimizer ordering."""
    n2 = 0
    cost = 0.0
    for g in gates:
        if not isinstance(g, Gate):
            continue
        if len(g.qubits) == 2:
            n2 += 1
            if chip.has_link(*g.qubits):
                cost += gate_unit_cost(chip, g.qubits[0], g.qubits[1], mode)
            else:
                cost += 1e9  # non-adjacent placeholder; callers avoid this
        else:
            cost += 1.0
    return n2, len(gates), cost


def synthesize_2q_native(u: np.ndarray, qa: int, qb: int, chip: ChipSpecification,
                         mode: str = "duration") -> list[Gate]:
    """Best all-native realization of a 2Q unitary on an existing link."""
    ops = _link_ops(chip, qa, qb)
    if not ops:
        raise EmissionError(f"link {qa}-{qb} has no usable two-qubit operator")
    best: list[Gate] | None = None
    best_cost = None
    for items in two_qubit_candidates(u, qa, qb, ops):
        try:
            gates = emit_items(items, chip)
        except (EmissionError, ValueError):
            continue
        cost = sequence_cost(gates, chip, mode)
        if best_cost is None or cost < best_cost:
            best, best_cost = gates, cost
    if best is None:
        raise EmissionError(f"no emission candidate succeeded on link {qa}-{qb}")
    return best


# ---------------------------------------------------------------------------
# Gate dispatch


def lower_gate(gate: Gate, ctx: RuleContext) -> list[Gate]:
    """Reduce a 3-4 qubit gate to 1Q/2Q gates (not necessarily native)."""
    if gate.name == "CCNOT" and ctx.ccnot_template_enabled:
        return ccnot_template(*gate.qubits)
    if not gate.is_concrete():
        raise SynthesisError(f"cannot lower symbolic multi-qubit gate {gate}")
    u = gate_matrix(gate, ctx.definitions)
    return generic_synthesize_matrix(u, list(gate.qubits))


def nativize_gate(gate: Gate, ctx: RuleContext) -> list[Gate]:
    """Rewrite a gate application into native instructions.

    Two-qubit gates must already sit on a chip link; higher arities are
    lowered first and each piece nativized (valid when all pairs are linked).
    """
    chip = ctx.chip
    if is_native(chip, gate) is NativeStatus.NATIVE:
        return [gate]
    arity = len(gate.qubits)
    if arity == 1:
        if not gate.is_concrete():
            raise SynthesisError(f"symbolic one-qubit gate {gate} is not native here")
        return native_1q_sequence(gate_matrix(gate, ctx.definitions), gate.qubits[0], chip)
    if arity == 2:
        if not gate.is_concrete():
            if gate.name == "CPHASE":
                out: list[Gate] = []
                for g in cphase_to_cz_template(gate.params[0], *gate.qubits):
                    out.extend(nativize_gate(g, ctx))
                return out
            raise SynthesisError(f"no symbolic template for {gate}")
        u = gate_matrix(gate, ctx.definitions)
        return synthesize_2q_native(u, gate.qubits[0], gate.qubits[1], chip, ctx.cost_mode)
    out = []
    for g in lower_gate(gate, ctx):
        out.extend(nativize_gate(g, ctx))
    return out


# ---------------------------------------------------------------------------
# The shipped catalog

RULE_CATALOG: list[RewriteRule] = [
    RewriteRule("agglutinate-RZs", 2, (("RZ", 1), ("RZ", 1)), _agglutinate("RZ"),
                {("RZ", 1)}),
    RewriteRule("agglutinate-RXs", 2, (("RX", 1), ("RX", 1)), _agglutinate("RX"),
                {("RX", 1)}),
    RewriteRule("eliminate-zero-rotation", 1,
                (("RZ", 1), ("RX", 1), ("RY", 1)), _eliminate_zero_rotation, set()),
    RewriteRule("eliminate-full-CPHASE", 1, (("CPHASE", 2),), _eliminate_full_cphase,
                set()),
    RewriteRule("commute-RZ-through-CZ", 2, (("RZ", 1), ("CZ", 2)), _commute_rz_cz,
                {("RZ", 1), ("CZ", 2)}),
    RewriteRule("commute-diagonal-through-CPHASE", 2, (("RZ", 1), ("CPHASE", 2)),
                _commute_diagonal_cphase, {("RZ", 1), ("CPHASE", 2)}),
    RewriteRule("CNOT-to-CZ", 1, (("CNOT", 2),), _cnot_to_cz,
                {("H", 1), ("CZ", 2)}, total=True),
    RewriteRule("SWAP-to-3-entanglers", 1, (("SWAP", 2),), _swap_to_cnots,
                {("CNOT", 2)}, total=True),
    RewriteRule("CPHASE-to-CZ-template", 1, (("CPHASE", 2),), _cphase_template_rule,
                {("RZ", 1), ("RX", 1), ("CZ", 2)}, total=True),
    RewriteRule("CCNOT-to-CNOT", 1, (("CCNOT", 3),), _ccnot_rule,
                {("H", 1), ("RZ", 1), ("CNOT", 2)}, total=True),
    RewriteRule("euler-zyz", 1, (("*", 1),), _zyz_rule,
                {("RZ", 1), ("RY", 1)}, total=True),
    RewriteRule("native-1q-form", 1, (("*", 1),), _native_1q_form_rule,
                _native_1q_shapes, total=True),
    RewriteRule("kak-2q", 1, (("*", 2),), _kak_rule,
                {("RZ", 1), ("RY", 1), ("CNOT", 2)}, total=True),
    RewriteRule("native-2q-form", 1, (("*", 2),), _native_2q_form_rule,
                _native_shapes, total=True),
    RewriteRule("generic-synthesis", 1, (("*", 3), ("*", 4)), _generic_rule,
                {("RZ", 1), ("RY", 1), ("X", 1), ("H", 1), ("CNOT", 2)}, total=True),
    RewriteRule("fuse-2q-blocks", 2, (("*", 2), ("*", 2)), _fuse_2q_pair_rule,
                _native_shapes),
    RewriteRule("elide-on-eigenvector", 1, (("*", 1), ("*", 2), ("*", 3)),
                _elide_on_eigenvector_rule, set(), state_aware=True),
]


def get_rule(name: str) -> RewriteRule:
    for rule in RULE_CATALOG:
        if rule.name == name:
            return rule
    raise KeyError(name)
