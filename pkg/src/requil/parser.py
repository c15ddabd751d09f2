"""Line-oriented parser for the Quil subset, plus circuit expansion."""

from __future__ import annotations

import math
import re

from .ir import (
    CircuitCall,
    Declare,
    DefCircuit,
    DefGate,
    Gate,
    Instruction,
    Jump,
    JumpUnless,
    JumpWhen,
    Label,
    Measure,
    MemoryRef,
    Pragma,
    Program,
)
from .params import EntryExpr, ParamError, ParamExpr

# name -> (parameter count, qubit count)
BUILTIN_GATES: dict[str, tuple[int, int]] = {
    "I": (0, 1), "X": (0, 1), "Y": (0, 1), "Z": (0, 1),
    "H": (0, 1), "S": (0, 1), "T": (0, 1),
    "RX": (1, 1), "RY": (1, 1), "RZ": (1, 1),
    "CNOT": (0, 2), "CZ": (0, 2), "SWAP": (0, 2), "ISWAP": (0, 2),
    "CPHASE": (1, 2), "CCNOT": (0, 3),
}


class QuilSyntaxError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = "" if line is None else f" at line {line}" + ("" if column is None else f", column {column}")
        super().__init__(message + loc)
        self.line = line
        self.column = column


_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>%?[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()+\-*/,])"
    r"|(?P<ws>\s+)"
)


def _tokenize(text: str, line_no: int) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuilSyntaxError(f"unexpected character {text[pos]!r}", line_no, pos + 1)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    return tokens


class _ExprParser:
    """Recursive-descent parser over +, -, *, /, unary minus, calls, parens."""

    def __init__(self, tokens: list[tuple[str, str, int]], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise QuilSyntaxError("unexpected end of expression", self.line_no)
        self.pos += 1
        return tok

    def expect(self, value: str) -> None:
        tok = self.next()
        if tok[1] != value:
            raise QuilSyntaxError(f"expected {value!r}, found {tok[1]!r}", self.line_no, tok[2])

    def expression(self) -> EntryExpr:
        node = self.term()
        while (tok := self.peek()) and tok[1] in "+-":
            self.next()
            node = EntryExpr(tok[1], (node, self.term()))
        return node

    def term(self) -> EntryExpr:
        node = self.factor()
        while (tok := self.peek()) and tok[1] in "*/":
            self.next()
            node = EntryExpr(tok[1], (node, self.factor()))
        return node

    def factor(self) -> EntryExpr:
        tok = self.next()
        kind, value, col = tok
        if value == "-":
            return EntryExpr("neg", (self.factor(),))
        if value == "+":
            return self.factor()
        if value == "(":
            node = self.expression()
            self.expect(")")
            return node
        if kind == "num":
            return EntryExpr("num", (float(value),))
        if kind == "name":
            if value == "pi":
                return EntryExpr("num", (math.pi,))
            if value == "i":
                return EntryExpr("num", (1j,))
            if (nxt := self.peek()) and nxt[1] == "(":
                self.next()
                arg = self.expression()
                self.expect(")")
                return EntryExpr("call", (value, arg))
            name = value[1:] if value.startswith("%") else value
            return EntryExpr("var", (name,))
        raise QuilSyntaxError(f"unexpected token {value!r}", self.line_no, col)


def _entry_to_affine(node: EntryExpr, line_no: int) -> ParamExpr:
    """Fold an expression tree into an affine ParamExpr, rejecting the rest."""
    try:
        if node.op == "num":
            value = node.args[0]
            if isinstance(value, complex) and value.imag != 0:
                raise ParamError("complex value in gate parameter")
            return ParamExpr(float(value.real if isinstance(value, complex) else value))
        if node.op == "var":
            return ParamExpr(0.0, {node.args[0]: 1.0})
        if node.op == "neg":
            return -_entry_to_affine(node.args[0], line_no)
        if node.op == "call":
            arg = _entry_to_affine(node.args[1], line_no)
            if not arg.is_concrete:
                raise ParamError(f"{node.args[0]} of a symbolic parameter is not affine")
            value = EntryExpr("call", (node.args[0], EntryExpr("num", (arg.constant,)))).evaluate({})
            if abs(value.imag) > 1e-12:
                raise ParamError("complex value in gate parameter")
            return ParamExpr(value.real)
        a = _entry_to_affine(node.args[0], line_no)
        b = _entry_to_affine(node.args[1], line_no)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    except ParamError as exc:
        raise QuilSyntaxError(str(exc), line_no) from exc


def parse_param(text: str, line_no: int = 0) -> ParamExpr:
    parser = _ExprParser(_tokenize(text, line_no), line_no)
    expr = parser.expression()
    if parser.peek() is not None:
        raise QuilSyntaxError(f"trailing tokens after expression: {parser.peek()[1]!r}", line_no)
    return _entry_to_affine(expr, line_no)


_MEMREF_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)(?:\[(\d+)\])?$")


def _parse_memref(text: str, line_no: int) -> MemoryRef:
    m = _MEMREF_RE.match(text)
    if m is None:
        raise QuilSyntaxError(f"malformed memory reference {text!r}", line_no)
    return MemoryRef(m.group(1), int(m.group(2)) if m.group(2) else 0)


def _split_application(line: str, line_no: int) -> tuple[str, list[str], list[str]]:
    """Split ``NAME(p1, p2) a b`` into name, parameter strings, argument tokens."""
    m = re.match(r"^([A-Za-z_][A-Za-z_0-9-]*)", line)
    if m is None:
        raise QuilSyntaxError(f"cannot parse instruction {line!r}", line_no)
    name = m.group(1)
    rest = line[m.end():].lstrip()
    params: list[str] = []
    if rest.startswith("("):
        depth = 0
        for i, ch in enumerate(rest):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    break
        else:
            raise QuilSyntaxError("unbalanced parentheses", line_no)
        inner = rest[1:i]
        params = _split_commas(inner)
        rest = rest[i + 1:].strip()
    args = rest.split() if rest else []
    return name, params, args


def _split_commas(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i].strip())
            start = i + 1
    tail = text[start:].strip()
    if tail or parts:
        parts.append(tail)
    return [p for p in parts if p]


def _strip_comment(line: str) -> str:
    if "#" in line:
        line = line[: line.index("#")]
    return line.rstrip()


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.idx = 0
        self.program = Program()

    def run(self) -> Program:
        while self.idx < len(self.lines):
            raw = self.lines[self.idx]
            self.idx += 1
            line = _strip_comment(raw)
            if not line.strip():
                continue
            if line[0] in " \t":
                raise QuilSyntaxError("unexpected indented line", self.idx, 1)
            self.dispatch(line)
        return self.program

    def collect_block(self) -> list[str]:
        block: list[str] = []
        pending_blanks = 0
        while self.idx < len(self.lines):
            stripped = _strip_comment(self.lines[self.idx])
            if not stripped.strip():
                pending_blanks += 1
                self.idx += 1
                continue
            if stripped[0] not in " \t":
                self.idx -= pending_blanks  # blanks after a block belong outside it
                break
            pending_blanks = 0
            block.append(stripped.strip())
            self.idx += 1
        return block

    def dispatch(self, line: str) -> None:
        line_no = self.idx
        head = line.split(maxsplit=1)[0]
        if head == "DECLARE":
            self.parse_declare(line, line_no)
        elif head == "DEFGATE":
            self.parse_defgate(line, line_no)
        elif head == "DEFCIRCUIT":
            self.parse_defcircuit(line, line_no)
        elif head == "MEASURE":
            self.parse_measure(line, line_no)
        elif head == "LABEL":
            self.program.body.append(Label(self.parse_label_name(line, line_no)))
        elif head == "JUMP":
            self.program.body.append(Jump(self.parse_label_name(line, line_no)))
        elif head in ("JUMP-UNLESS", "JUMP-WHEN"):
            self.parse_conditional_jump(line, line_no, head)
        elif head == "PRAGMA":
            self.program.body.append(Pragma(line[len("PRAGMA"):].strip()))
        else:
            self.parse_application(line, line_no)

    def parse_declare(self, line: str, line_no: int) -> None:
        m = re.match(r"^DECLARE\s+([A-Za-z_][A-Za-z_0-9]*)\s+(BIT|REAL)(?:\[(\d+)\])?\s*$", line)
        if m is None:
            raise QuilSyntaxError(f"malformed DECLARE: {line!r}", line_no)
        name, mem_type, length = m.group(1), m.group(2), int(m.group(3) or 1)
        if self.program.memory_region(name) is not None:
            raise QuilSyntaxError(f"duplicate declaration of {name!r}", line_no)
        self.program.declarations.append(Declare(name, mem_type, length))

    def parse_defgate(self, line: str, line_no: int) -> None:
        m = re.match(r"^DEFGATE\s+([A-Za-z_][A-Za-z_0-9]*)\s*(\(([^)]*)\))?\s*:\s*$", line)
        if m is None:
            raise QuilSyntaxError(f"malformed DEFGATE: {line!r}", line_no)
        name = m.group(1)
        if name in BUILTIN_GATES:
            raise QuilSyntaxError(f"DEFGATE may not shadow the builtin gate {name!r}", line_no)
        params = tuple(
            p.strip().lstrip("%") for p in _split_commas(m.group(3) or "")
        )
        rows_text = self.collect_block()
        if not rows_text:
            raise QuilSyntaxError(f"DEFGATE {name} has an empty matrix", line_no)
        matrix: list[list[EntryExpr]] = []
        for offset, row in enumerate(rows_text):
            entries = []
            for cell in _split_commas(row):
                parser = _ExprParser(_tokenize(cell, line_no + offset + 1), line_no + offset + 1)
                entries.append(parser.expression())
            matrix.append(entries)
        n = len(matrix)
        if n < 2 or (n & (n - 1)) != 0 or any(len(r) != n for r in matrix):
            raise QuilSyntaxError(
                f"DEFGATE {name} matrix must be square with power-of-two dimension", line_no)
        free = set().union(*(e.variables() for row in matrix for e in row)) - set(params)
        if free:
            raise QuilSyntaxError(
                f"DEFGATE {name} references undeclared parameters {sorted(free)}", line_no)
        self.program.gate_definitions[name] = DefGate(name, params, matrix, rows_text)

    def parse_defcircuit(self, line: str, line_no: int) -> None:
        m = re.match(r"^DEFCIRCUIT\s+([A-Za-z_][A-Za-z_0-9]*)((?:\s+[A-Za-z_][A-Za-z_0-9]*)*)\s*:\s*$", line)
        if m is None:
            raise QuilSyntaxError(f"malformed DEFCIRCUIT: {line!r}", line_no)
        name = m.group(1)
        formals = tuple(m.group(2).split())
        body = self.collect_block()
        self.program.circuit_definitions[name] = DefCircuit(name, formals, body)

    def parse_measure(self, line: str, line_no: int) -> None:
        parts = line.split()
        if len(parts) == 2 and parts[1].isdigit():
            self.program.body.append(Measure(int(parts[1]), None))
            return
        if len(parts) == 3 and parts[1].isdigit():
            ref = _parse_memref(parts[2], line_no)
            self.check_memref(ref, "BIT", line_no)
            self.program.body.append(Measure(int(parts[1]), ref))
            return
        raise QuilSyntaxError(f"malformed MEASURE: {line!r}", line_no)

    def parse_label_name(self, line: str, line_no: int) -> str:
        parts = line.split()
        if len(parts) != 2 or not parts[1].startswith("@"):
            raise QuilSyntaxError(f"malformed label instruction: {line!r}", line_no)
        return parts[1][1:]

    def parse_conditional_jump(self, line: str, line_no: int, head: str) -> None:
        parts = line.split()
        if len(parts) != 3 or not parts[1].startswith("@"):
            raise QuilSyntaxError(f"malformed {head}: {line!r}", line_no)
        ref = _parse_memref(parts[2], line_no)
        self.check_memref(ref, "BIT", line_no)
        cls = JumpUnless if head == "JUMP-UNLESS" else JumpWhen
        self.program.body.append(cls(parts[1][1:], ref))

    def check_memref(self, ref: MemoryRef, expected_type: str, line_no: int) -> None:
        region = self.program.memory_region(ref.name)
        if region is None:
            raise QuilSyntaxError(f"reference to undeclared memory region {ref.name!r}", line_no)
        if region.memory_type != expected_type:
            raise QuilSyntaxError(
                f"memory region {ref.name!r} has type {region.memory_type}, expected {expected_type}",
                line_no)
        if ref.index >= region.length:
            raise QuilSyntaxError(
                f"index {ref.index} out of range for {ref.name}[{region.length}]", line_no)

    def parse_application(self, line: str, line_no: int) -> None:
        name, param_texts, arg_texts = _split_application(line, line_no)
        params = tuple(parse_param(p, line_no) for p in param_texts)
        for p in params:
            for var in p.variables():
                region = self.program.memory_region(var)
                if region is None:
                    raise QuilSyntaxError(
                        f"reference to undeclared memory region {var!r}", line_no)
                if region.memory_type != "REAL":
                    raise QuilSyntaxError(f"parameter region {var!r} must be REAL", line_no)

        if name in self.program.circuit_definitions:
            if params:
                raise QuilSyntaxError(f"circuit {name} does not take parameters", line_no)
            args: list[int | MemoryRef] = []
            for a in arg_texts:
                args.append(int(a) if a.isdigit() else _parse_memref(a, line_no))
            circuit = self.program.circuit_definitions[name]
            if len(args) != len(circuit.formals):
                raise QuilSyntaxError(
                    f"circuit {name} expects {len(circuit.formals)} arguments, got {len(args)}",
                    line_no)
            self.program.body.append(CircuitCall(name, tuple(args)))
            return

        if name in BUILTIN_GATES:
            want_params, want_qubits = BUILTIN_GATES[name]
        elif name in self.program.gate_definitions:
            defn = self.program.gate_definitions[name]
            want_params, want_qubits = len(defn.parameters), defn.num_qubits
        else:
            raise QuilSyntaxError(f"unknown gate or circuit {name!r}", line_no)

        if len(params) != want_params:
            raise QuilSyntaxError(
                f"{name} expects {want_params} parameters, got {len(params)}", line_no)
        if not all(a.lstrip("-").isdigit() for a in arg_texts):
            raise QuilSyntaxError(f"gate {name} arguments must be qubit indices", line_no)
        qubits = tuple(int(a) for a in arg_texts)
        if any(q < 0 for q in qubits):
            raise QuilSyntaxError("qubit indices must be non-negative", line_no)
        if len(qubits) != want_qubits:
            raise QuilSyntaxError(
                f"{name} expects {want_qubits} qubits, got {len(qubits)}", line_no)
        if len(set(qubits)) != len(qubits):
            raise QuilSyntaxError(f"duplicate qubit argument in {line!r}", line_no)
        self.program.body.append(Gate(name, params, qubits))


def parse_program(text: str) -> Program:
    """Parse Quil-subset source text into a :class:`Program`."""
    return _Parser(text).run()


# ---------------------------------------------------------------------------
# DEFCIRCUIT expansion


def _substitute_tokens(line: str, env: dict[str, str]) -> str:
    def repl(m: re.Match) -> str:
        return env.get(m.group(0), m.group(0))

    return re.sub(r"[A-Za-z_][A-Za-z_0-9]*", repl, line)


def _freshen_labels(lines: list[str], counter: int) -> list[str]:
    local = {
        m.group(1)
        for line in lines
        if (m := re.match(r"^LABEL\s+@([A-Za-z_][A-Za-z_0-9]*)", line))
    }
    if not local:
        return lines
    mapping = {name: f"{name}_{counter}" for name in local}
    out = []
    for line in lines:
        out.append(re.sub(r"@([A-Za-z_][A-Za-z_0-9]*)",
                          lambda m: "@" + mapping.get(m.group(1), m.group(1)), line))
    return out


def expand_circuits(program: Program) -> Program:
    """Replace every DEFCIRCUIT call site with its substituted body."""
    counter = 0
    body = list(program.body)
    depth = 0
    while any(isinstance(i, CircuitCall) for i in body):
        depth += 1
        if depth > len(program.circuit_definitions) + 1:
            raise QuilSyntaxError("cycle in circuit definitions")
        new_body: list[Instruction] = []
        for instr in body:
            if not isinstance(instr, CircuitCall):
                new_body.append(instr)
                continue
            counter += 1
            circuit = program.circuit_definitions[instr.name]
            env = {}
            for formal, actual in zip(circuit.formals, instr.args):
                if isinstance(actual, MemoryRef):
                    env[formal] = actual.name if actual.index == 0 else str(actual)
                else:
                    env[formal] = str(actual)
            lines = [_substitute_tokens(line, env) for line in circuit.body_lines]
            lines = _freshen_labels(lines, counter)
            sub = _Parser("")
            sub.program = Program(
                declarations=list(program.declarations),
                gate_definitions=dict(program.gate_definitions),
                circuit_definitions=dict(program.circuit_definitions),
            )
            for offset, line in enumerate(lines):
                sub.idx = offset + 1
                sub.dispatch(line)
            new_body.extend(sub.program.body)
        body = new_body
    return Program(list(program.declarations), dict(program.gate_definitions),
                   dict(program.circuit_definitions), body)
