"""Abstract syntax of D2C programs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

RESERVED_STATE = {"my_name": 1, "my_neighbor": 1}
RESERVED_TRANSPORT = {"start": 0}
NEIGHBOR_ALIAS = "neighbor"


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Var, Const]


class Kind(str, enum.Enum):
    STATE = "state"
    TRANSPORT = "transport"
    INPUT = "input"


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[Term, ...] = ()
    label: Optional[Term] = None
    kind: Optional[Kind] = field(default=None, compare=True)

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def signature(self) -> tuple[str, int]:
        return (self.pred, len(self.args))

    def variables(self) -> set[Var]:
        terms = list(self.args)
        if self.label is not None:
            terms.append(self.label)
        return {t for t in terms if isinstance(t, Var)}

    def constants(self) -> set[str]:
        terms = list(self.args)
        if self.label is not None:
            terms.append(self.label)
        return {t.name for t in terms if isinstance(t, Const)}

    def __str__(self) -> str:
        s = self.pred
        if self.args:
            s += "(" + ",".join(str(a) for a in self.args) + ")"
        if self.label is not None:
            s += "@" + str(self.label)
        return s


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True
    prev: bool = False

    def __str__(self) -> str:
        return ("" if self.positive else "not ") + str(self.atom)


@dataclass(frozen=True)
class Choice:
    """Functional dependency ``domain -> range`` enforced among rule firings."""

    domain: tuple[Var, ...]
    range: tuple[Var, ...]

    def variables(self) -> set[Var]:
        return set(self.domain) | set(self.range)

    def __str__(self) -> str:
        rng = ",".join(v.name for v in self.range)
        if not self.domain:
            return f"choice({rng})"
        dom = ",".join(v.name for v in self.domain)
        return f"choice(({dom}),{rng})"


@dataclass(frozen=True)
class Constraint:
    left: Term
    right: Term

    def variables(self) -> set[Var]:
        return {t for t in (self.left, self.right) if isinstance(t, Var)}

    def __str__(self) -> str:
        return f"{self.left} != {self.right}"


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...] = ()
    prev_body: tuple[Literal, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    choice: Optional[Choice] = None
    line: int = field(default=0, compare=False)

    @property
    def literals(self) -> tuple[Literal, ...]:
        return self.body + self.prev_body

    def variables(self) -> set[Var]:
        out = set(self.head.variables())
        for lit in self.literals:
            out |= lit.atom.variables()
        for c in self.constraints:
            out |= c.variables()
        if self.choice is not None:
            out |= self.choice.variables()
        return out

    def constants(self) -> set[str]:
        out = set(self.head.constants())
        for lit in self.literals:
            out |= lit.atom.constants()
        for c in self.constraints:
            out |= {t.name for t in (c.left, c.right) if isinstance(t, Const)}
        return out

    def __str__(self) -> str:
        cur = [str(l) for l in self.body]
        if self.choice is not None:
            cur.append(str(self.choice))
        parts = [str(self.head), "if"]
        text = " ".join(parts)
        if cur:
            text += " " + ", ".join(cur)
        if self.prev_body:
            text += " prev " + ", ".join(str(l) for l in self.prev_body)
        if self.constraints:
            sep = ", " if (cur or self.prev_body) else " "
            text += sep + ", ".join(str(c) for c in self.constraints)
        return text + "."


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...] = ()
    input_sig: frozenset[tuple[str, int]] = frozenset()
    transport_sig: frozenset[tuple[str, int]] = frozenset()
    state_sig: frozenset[tuple[str, int]] = frozenset()

    def kind_of(self, pred: str) -> Optional[Kind]:
        for kind, sig in (
            (Kind.STATE, self.state_sig),
            (Kind.TRANSPORT, self.transport_sig),
            (Kind.INPUT, self.input_sig),
        ):
            if any(name == pred for name, _ in sig):
                return kind
        return None

    def constants(self) -> set[str]:
        out: set[str] = set()
        for r in self.rules:
            out |= r.constants()
        return out

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.rules) + ("\n" if self.rules else "")


def pretty(program: Program) -> str:
    return str(program)
