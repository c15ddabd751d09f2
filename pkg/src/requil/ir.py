"""Program representation: typed instructions and whole-program containers."""

from __future__ import annotations

from dataclasses import dataclass, field

from .params import EntryExpr, ParamExpr, format_param


@dataclass(frozen=True)
class MemoryRef:
    """Reference to a classical memory cell, e.g. ``ro[2]``; bare names mean index 0."""

    name: str
    index: int = 0

    def __str__(self) -> str:
        return f"{self.name}[{self.index}]"


@dataclass(frozen=True, eq=False)
class Gate:
    """Application of a named gate to qubits, with optional parameters."""

    name: str
    params: tuple[ParamExpr, ...]
    qubits: tuple[int, ...]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Gate):
            return NotImplemented
        return (
            self.name == other.name
            and self.qubits == other.qubits
            and len(self.params) == len(other.params)
            and all(a == b for a, b in zip(self.params, other.params))
        )

    def is_concrete(self) -> bool:
        return all(p.is_concrete for p in self.params)

    def __str__(self) -> str:
        qubits = " ".join(str(q) for q in self.qubits)
        if self.params:
            args = ", ".join(format_param(p) for p in self.params)
            return f"{self.name}({args}) {qubits}"
        return f"{self.name} {qubits}"


@dataclass(frozen=True)
class Measure:
    """``MEASURE q addr``; ``target=None`` discards the outcome."""

    qubit: int
    target: MemoryRef | None = None

    def __str__(self) -> str:
        if self.target is None:
            return f"MEASURE {self.qubit}"
        return f"MEASURE {self.qubit} {self.target}"


@dataclass(frozen=True)
class Label:
    name: str

    def __str__(self) -> str:
        return f"LABEL @{self.name}"


@dataclass(frozen=True)
class Jump:
    label: str

    def __str__(self) -> str:
        return f"JUMP @{self.label}"


@dataclass(frozen=True)
class JumpWhen:
    label: str
    condition: MemoryRef

    def __str__(self) -> str:
        return f"JUMP-WHEN @{self.label} {self.condition}"


@dataclass(frozen=True)
class JumpUnless:
    label: str
    condition: MemoryRef

    def __str__(self) -> str:
        return f"JUMP-UNLESS @{self.label} {self.condition}"


@dataclass(frozen=True)
class Pragma:
    text: str

    def __str__(self) -> str:
        return f"PRAGMA {self.text}"


@dataclass(frozen=True)
class Declare:
    name: str
    memory_type: str  # BIT or REAL
    length: int = 1

    def __str__(self) -> str:
        if self.length == 1:
            return f"DECLARE {self.name} {self.memory_type}"
        return f"DECLARE {self.name} {self.memory_type}[{self.length}]"


@dataclass(frozen=True, eq=False)
class CircuitCall:
    """Unexpanded DEFCIRCUIT call site; removed by circuit expansion."""

    name: str
    args: tuple[int | MemoryRef, ...]

    def __str__(self) -> str:
        return " ".join([self.name] + [str(a) for a in self.args])


Instruction = (
    Gate | Measure | Label | Jump | JumpWhen | JumpUnless | Pragma | Declare | CircuitCall
)


@dataclass
class DefGate:
    name: str
    parameters: tuple[str, ...]
    matrix: list[list[EntryExpr]]  # 2^k x 2^k entries
    raw_rows: list[str] = field(default_factory=list)

    @property
    def num_qubits(self) -> int:
        return (len(self.matrix)).bit_length() - 1


@dataclass
class DefCircuit:
    """Circuit definition; the body is kept textual because formals occupy
    qubit positions and only become instructions after substitution."""

    name: str
    formals: tuple[str, ...]
    body_lines: list[str]


@dataclass
class Program:
    declarations: list[Declare] = field(default_factory=list)
    gate_definitions: dict[str, DefGate] = field(default_factory=dict)
    circuit_definitions: dict[str, DefCircuit] = field(default_factory=dict)
    body: list[Instruction] = field(default_factory=list)

    def gates(self) -> list[Gate]:
        return [i for i in self.body if isinstance(i, Gate)]

    def qubits(self) -> set[int]:
        out: set[int] = set()
        for instr in self.body:
            out |= set(instruction_qubits(instr))
        return out

    def memory_region(self, name: str) -> Declare | None:
        for d in self.declarations:
            if d.name == name:
                return d
        return None

    def substitute(self, env: dict[str, float]) -> Program:
        """Bind run-time parameter values, leaving other variables symbolic."""
        body: list[Instruction] = []
        for instr in self.body:
            if isinstance(instr, Gate):
                params = tuple(p.substitute(env) for p in instr.params)
                body.append(Gate(instr.name, params, instr.qubits))
            else:
                body.append(instr)
        return Program(list(self.declarations), dict(self.gate_definitions),
                       dict(self.circuit_definitions), body)

    def __str__(self) -> str:
        return program_to_text(self)


def instruction_qubits(instr: Instruction) -> tuple[int, ...]:
    if isinstance(instr, Gate):
        return instr.qubits
    if isinstance(instr, Measure):
        return (instr.qubit,)
    if isinstance(instr, CircuitCall):
        return tuple(a for a in instr.args if isinstance(a, int))
    return ()


def is_pure_quantum(instr: Instruction) -> bool:
    """True for instructions with no classical effect or control flow."""
    return isinstance(instr, Gate)


def program_to_text(program: Program) -> str:
    lines: list[str] = []
    for dg in program.gate_definitions.values():
        params = f"({', '.join('%' + p for p in dg.parameters)})" if dg.parameters else ""
        lines.append(f"DEFGATE {dg.name}{params}:")
        lines.extend(f"    {row}" for row in dg.raw_rows)
        lines.append("")
    for dc in program.circuit_definitions.values():
        formals = " ".join(dc.formals)
        lines.append(f"DEFCIRCUIT {dc.name} {formals}:".replace(" :", ":"))
        lines.extend(f"    {line}" for line in dc.body_lines)
        lines.append("")
    lines.extend(str(d) for d in program.declarations)
    for instr in program.body:
        lines.append(str(instr))
    return "\n".join(lines) + ("\n" if lines else "")
