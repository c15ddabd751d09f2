"""Device model: qubits and links tagged with native gate records and metadata.

The serialized form is the JSON layout with top-level "1Q" and "2Q" maps;
qubit keys are decimal strings, link keys are "a-b".  Gate records carry an
"operator", a "parameters" list (numbers or the wildcard "_"), an "arguments"
list (simplex-local positions or "_"), and optional "duration" (ns) and
"fidelity" fields.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

from .ir import Gate

PARAM_MATCH_TOL = 1e-10

DEFAULT_1Q_DURATION = 50.0
DEFAULT_2Q_DURATION = 150.0
DEFAULT_FIDELITY = 1.0

WILDCARD = "_"


class ChipError(ValueError):
    """Raised for malformed or unsupported chip descriptions."""


class NativeStatus(Enum):
    NATIVE = "native"
    NON_NATIVE_GATE = "non-native-gate"
    NON_ADJACENT = "non-adjacent"


@dataclass(frozen=True)
class NativeGateRecord:
    operator: str
    parameters: tuple[float | str, ...] = ()
    arguments: tuple[int | str, ...] = ()
    duration: float = DEFAULT_1Q_DURATION
    fidelity: float = DEFAULT_FIDELITY

    def matches(self, gate: Gate, positions: tuple[int, ...]) -> bool:
        """True if ``gate`` applied at simplex-local ``positions`` fits this record."""
        if gate.name != self.operator or len(gate.params) != len(self.parameters):
            return False
        for want, have in zip(self.parameters, gate.params):
            if want == WILDCARD:
                continue
            if not have.is_concrete or abs(have.constant - want) > PARAM_MATCH_TOL:
                return False
        if len(self.arguments) != len(positions):
            return False
        for want, have in zip(self.arguments, positions):
            if want != WILDCARD and want != have:
                return False
        return True


@dataclass
class QubitRecord:
    gates: list[NativeGateRecord] = field(default_factory=list)


@dataclass
class LinkRecord:
    gates: list[NativeGateRecord] = field(default_factory=list)


def _default_1q_gates() -> list[NativeGateRecord]:
    records = [
        NativeGateRecord("RX", (k * math.pi / 2,), (0,))
        for k in (-2, -1, 1, 2)
    ]
    records.append(NativeGateRecord("RZ", (WILDCARD,), (0,)))
    return records


def _default_2q_gates() -> list[NativeGateRecord]:
    return [NativeGateRecord("CZ", (), (0, 1), duration=DEFAULT_2Q_DURATION)]


@dataclass
class ChipSpecification:
    qubits: dict[int, QubitRecord]
    links: dict[tuple[int, int], LinkRecord]

    def __post_init__(self) -> None:
        for a, b in self.links:
            if a >= b:
                raise ChipError(f"link key ({a},{b}) must be sorted")
            if a not in self.qubits or b not in self.qubits:
                raise ChipError(f"link ({a},{b}) has a dangling endpoint")

    def neighbors(self, q: int) -> list[int]:
        out = []
        for a, b in self.links:
            if a == q:
                out.append(b)
            elif b == q:
                out.append(a)
        return sorted(out)

    def has_link(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.links

    def link(self, a: int, b: int) -> LinkRecord:
        return self.links[(min(a, b), max(a, b))]

    def native_2q_operators(self, a: int, b: int) -> list[str]:
        return [r.operator for r in self.link(a, b).gates]

    def best_2q_record(self, a: int, b: int, mode: str = "duration") -> NativeGateRecord:
        records = self.link(a, b).gates
        if not records:
            raise ChipError(f"link ({a},{b}) has no native gates")
        if mode == "fidelity":
            return max(records, key=lambda r: (r.fidelity, -r.duration, r.operator))
        return min(records, key=lambda r: (r.duration, r.operator))

    def has_fidelity_metadata(self) -> bool:
        for rec in self.all_records():
            if rec.fidelity != DEFAULT_FIDELITY:
                return True
        return False

    def all_records(self):
        for q in self.qubits.values():
            yield from q.gates
        for l in self.links.values():
            yield from l.gates


def _parse_record(obj: dict, n_args: int, default_duration: float) -> NativeGateRecord:
    try:
        operator = obj["operator"]
        parameters = tuple(
            p if p == WILDCARD else float(p) for p in obj.get("parameters", [])
        )
        arguments = tuple(
            a if a == WILDCARD else int(a) for a in obj.get("arguments", range(n_args))
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ChipError(f"malformed gate record {obj!r}") from exc
    if len(arguments) != n_args:
        raise ChipError(
            f"gate record {operator} has {len(arguments)} arguments on a "
            f"{n_args}-qubit simplex")
    duration = float(obj.get("duration", default_duration))
    fidelity = float(obj.get("fidelity", DEFAULT_FIDELITY))
    if not 0.0 < fidelity <= 1.0:
        raise ChipError(f"fidelity {fidelity} outside (0, 1] in record {operator}")
    return NativeGateRecord(operator, parameters, arguments, duration, fidelity)


def load_chip(text: str) -> ChipSpecification:
    """Parse the serialized architecture format into a :class:`ChipSpecification`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChipError(f"chip description is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "1Q" not in doc or "2Q" not in doc:
        raise ChipError('chip description must have top-level "1Q" and "2Q" objects')
    extra = set(doc) - {"1Q", "2Q"}
    if any(k for k in extra if k.endswith("Q")):
        raise ChipError(f"simplices of dimension >= 2 are not supported: {sorted(extra)}")

    qubits: dict[int, QubitRecord] = {}
    for key, body in doc["1Q"].items():
        if not key.isdigit():
            raise ChipError(f"malformed qubit key {key!r}")
        records = (
            [_parse_record(g, 1, DEFAULT_1Q_DURATION) for g in body["gates"]]
            if "gates" in body else _default_1q_gates()
        )
        qubits[int(key)] = QubitRecord(records)

    links: dict[tuple[int, int], LinkRecord] = {}
    for key, body in doc["2Q"].items():
        parts = key.split("-")
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise ChipError(f"malformed link key {key!r}")
        a, b = sorted(int(p) for p in parts)
        if a == b:
            raise ChipError(f"degenerate link {key!r}")
        records = (
            [_parse_record(g, 2, DEFAULT_2Q_DURATION) for g in body["gates"]]
            if "gates" in body else _default_2q_gates()
        )
        links[(a, b)] = LinkRecord(records)

    return ChipSpecification(qubits, links)


def serialize_chip(chip: ChipSpecification) -> str:
    """Canonical serialization; inverse of :func:`load_chip`."""

    def record_obj(rec: NativeGateRecord) -> dict:
        return {
            "operator": rec.operator,
            "parameters": list(rec.parameters),
            "arguments": list(rec.arguments),
            "duration": rec.duration,
            "fidelity": rec.fidelity,
        }

    doc = {
        "1Q": {
            str(q): {"gates": [record_obj(r) for r in rec.gates]}
            for q, rec in sorted(chip.qubits.items())
        },
        "2Q": {
            f"{a}-{b}": {"gates": [record_obj(r) for r in rec.gates]}
            for (a, b), rec in sorted(chip.links.items())
        },
    }
    return json.dumps(doc, indent=1)


def is_native(chip: ChipSpecification, instr: Gate, rewired: bool = True) -> NativeStatus:
    """Classify a gate application against the chip's native records.

    With ``rewired`` the qubits are physical and the exact simplex is checked;
    otherwise only the existence of a matching record shape anywhere counts.
    """
    if len(instr.qubits) == 1:
        q = instr.qubits[0]
        if rewired:
            if q not in chip.qubits:
                return NativeStatus.NON_ADJACENT
            records = chip.qubits[q].gates
            if any(r.matches(instr, (0,)) for r in records):
                return NativeStatus.NATIVE
            return NativeStatus.NON_NATIVE_GATE
        for rec in chip.qubits.values():
            if any(r.matches(instr, (0,)) for r in rec.gates):
                return NativeStatus.NATIVE
        return NativeStatus.NON_NATIVE_GATE

    if len(instr.qubits) == 2:
        a, b = instr.qubits
        if rewired:
            if not chip.has_link(a, b):
                return NativeStatus.NON_ADJACENT
            lo = min(a, b)
            positions = tuple(0 if q == lo else 1 for q in instr.qubits)
            if any(r.matches(instr, positions) for r in chip.link(a, b).gates):
                return NativeStatus.NATIVE
            return NativeStatus.NON_NATIVE_GATE
        for rec in chip.links.values():
            if any(r.matches(instr, (0, 1)) or r.matches(instr, (1, 0)) for r in rec.gates):
                return NativeStatus.NATIVE
        return NativeStatus.NON_NATIVE_GATE

    return NativeStatus.NON_NATIVE_GATE


@dataclass
class CostTable:
    """All-pairs SWAP-movement costs between physical qubits."""

    order: list[int]
    index: dict[int, int]
    distances: "object"  # numpy array, kept loosely typed to avoid import cycles
    mode: str

    def cost(self, a: int, b: int) -> float:
        return float(self.distances[self.index[a], self.index[b]])


def link_swap_cost(chip: ChipSpecification, a: int, b: int, mode: str) -> float:
    """Cost of one SWAP across a link: three times its best native 2Q gate."""
    record = chip.best_2q_record(a, b, mode)
    if mode == "fidelity":
        return 3.0 * -math.log(record.fidelity) if record.fidelity < 1.0 else 3.0 * 1e-6
    return 3.0 * record.duration


def gate_unit_cost(chip: ChipSpecification, a: int, b: int, mode: str) -> float:
    record = chip.best_2q_record(a, b, mode)
    if mode == "fidelity":
        return -math.log(record.fidelity) if record.fidelity < 1.0 else 1e-6
    return record.duration


def build_cost_table(chip: ChipSpecification, mode: str = "duration") -> CostTable:
    import numpy as np
    from scipy.sparse.csgraph import shortest_path

    if mode not in ("duration", "fidelity"):
        raise ChipError(f"unknown cost mode {mode!r}")
    order = sorted(chip.qubits)
    index = {q: i for i, q in enumerate(order)}
    n = len(order)
    weights = np.full((n, n), np.inf)
    np.fill_diagonal(weights, 0.0)
    for (a, b) in chip.links:
        w = link_swap_cost(chip, a, b, mode)
        i, j = index[a], index[b]
        weights[i, j] = weights[j, i] = w
    distances = shortest_path(weights, method="D", directed=False)
    return CostTable(order, index, distances, mode)
