"""Instruction dependency DAG: edges join consecutive users of a resource."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .ir import Gate, Instruction, Measure, instruction_qubits

Resource = tuple[str, object]  # ("q", qubit) or ("c", region name)


def instruction_resources(instr: Instruction) -> list[Resource]:
    res: list[Resource] = [("q", q) for q in instruction_qubits(instr)]
    if isinstance(instr, Measure) and instr.target is not None:
        res.append(("c", instr.target.name))
    return res


@dataclass
class InstructionDag:
    instructions: list[Instruction]
    successors: list[list[int]] = field(default_factory=list)
    predecessors: list[list[int]] = field(default_factory=list)

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with original-index tie-breaking (stable)."""
        indeg = [len(p) for p in self.predecessors]
        ready = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(ready)
        out: list[int] = []
        while ready:
            i = heapq.heappop(ready)
            out.append(i)
            for j in self.successors[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(ready, j)
        return out

    def depth(self) -> int:
        """Longest path, counting gate instructions only."""
        longest = [0] * len(self.instructions)
        for i in self.topological_order():
            weight = 1 if isinstance(self.instructions[i], Gate) else 0
            longest[i] += weight
            for j in self.successors[i]:
                longest[j] = max(longest[j], longest[i])
        return max(longest, default=0)


def build_dag(instructions: list[Instruction]) -> InstructionDag:
    n = len(instructions)
    dag = InstructionDag(list(instructions), [[] for _ in range(n)], [[] for _ in range(n)])
    last_user: dict[Resource, int] = {}
    for i, instr in enumerate(instructions):
        seen: set[int] = set()
        for res in instruction_resources(instr):
            prev = last_user.get(res)
            if prev is not None and prev not in seen:
                dag.successors[prev].append(i)
                dag.predecessors[i].append(prev)
                seen.add(prev)
            last_user[res] = i
    return dag
