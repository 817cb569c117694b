"""Static checks on parsed programs: safety, reserved heads, choice usage, stratification."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import (
    D2CError,
    NotPropositional,
    SafetyError,
    StratificationError,
    ValidationError,
)
from .syntax import RESERVED_STATE, RESERVED_TRANSPORT, Kind, Program, Rule, Var


def positive_variables(rule: Rule) -> set[Var]:
    out: set[Var] = set()
    for lit in rule.literals:
        if lit.positive:
            out |= lit.atom.variables()
    return out


def check_safety(rule: Rule) -> None:
    """Raise :class:`SafetyError` unless every variable occurs in a positive body literal."""
    unsafe = rule.variables() - positive_variables(rule)
    if unsafe:
        raise SafetyError(unsafe, rule)


def check_rule(rule: Rule) -> None:
    head = rule.head
    if head.kind is Kind.INPUT:
        raise ValidationError(f"line {rule.line}: head {head} is an input atom")
    if head.pred in RESERVED_STATE or head.pred in RESERVED_TRANSPORT:
        raise ValidationError(f"line {rule.line}: reserved predicate {head.pred} cannot be a rule head")
    for lit in rule.body:
        if lit.atom.kind is Kind.TRANSPORT and not lit.positive:
            raise ValidationError(
                f"line {rule.line}: negative transport literal {lit} outside prev scope"
            )
    if rule.choice is not None:
        ch = rule.choice
        if not ch.range:
            raise ValidationError(f"line {rule.line}: choice needs at least one range variable")
        if set(ch.domain) & set(ch.range):
            raise ValidationError(f"line {rule.line}: choice domain and range overlap")
    check_safety(rule)


@dataclass(frozen=True)
class Stratification:
    strata: tuple[frozenset[str], ...]

    def level(self, pred: str) -> int:
        for i, s in enumerate(self.strata):
            if pred in s:
                return i
        return 0


def _dependency_edges(program: Program):
    """Edges head <- body over current-step state predicates: (head, body, negative)."""
    edges = []
    for r in program.rules:
        if r.head.kind is not Kind.STATE:
            continue
        for lit in r.body:
            if lit.atom.kind is Kind.STATE:
                edges.append((r.head.pred, lit.atom.pred, not lit.positive))
    return edges


def _sccs(nodes, succ):
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = [0]

    def visit(v):
        # iterative Tarjan keeps deep programs off the recursion limit
        work = [(v, iter(sorted(succ.get(v, ()))))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(succ.get(w, ())))))
                    advanced = True
                    break
                if w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                out.append(sorted(comp))

    for v in sorted(nodes):
        if v not in index:
            visit(v)
    return out


def _negative_cycle(comp: set[str], edges) -> list[str]:
    """Describe one cycle through a negative edge inside ``comp`` as ``p -> ~q -> ... -> p``."""
    inner = [(h, b, neg) for h, b, neg in edges if h in comp and b in comp]
    start_h, start_b, _ = min(e for e in inner if e[2])
    # BFS from start_b back to start_h along head->body edges
    adj: dict[str, list[tuple[str, bool]]] = {}
    for h, b, neg in sorted(inner):
        adj.setdefault(h, []).append((b, neg))
    parent: dict[str, tuple[str, bool]] = {}
    frontier = [start_b]
    seen = {start_b}
    while frontier and start_h not in seen:
        nxt = []
        for v in frontier:
            for w, neg in adj.get(v, []):
                if w not in seen:
                    seen.add(w)
                    parent[w] = (v, neg)
                    nxt.append(w)
        frontier = nxt
    path = [(start_h, False)]
    if start_b != start_h:
        chain = []
        v = start_h
        while v != start_b:
            u, neg = parent[v]
            chain.append((v, neg))
            v = u
        path.append((start_b, True))
        path.extend(reversed(chain))
    else:
        path.append((start_h, True))
    return [("~" if neg else "") + name for name, neg in path]


def stratify(program: Program) -> Stratification:
    """Layer current-step state predicates; prev-scoped, transport and input literals add no edges."""
    edges = _dependency_edges(program)
    nodes = {name for name, _ in program.state_sig}
    succ: dict[str, set[str]] = {}
    for h, b, _ in edges:
        succ.setdefault(h, set()).add(b)
        nodes |= {h, b}
    comps = _sccs(nodes, succ)
    comp_of = {v: i for i, c in enumerate(comps) for v in c}
    for i, comp in enumerate(comps):
        cset = set(comp)
        if any(neg and comp_of[h] == i and comp_of[b] == i for h, b, neg in edges):
            raise StratificationError(_negative_cycle(cset, edges))
    # Tarjan emits components in reverse topological order (dependencies first)
    level: dict[int, int] = {}
    for i, comp in enumerate(comps):
        lv = 0
        for h, b, neg in edges:
            if comp_of[h] == i and comp_of[b] != i:
                lv = max(lv, level[comp_of[b]] + (1 if neg else 0))
        level[i] = lv
    n_levels = max(level.values(), default=-1) + 1
    strata = [set() for _ in range(max(n_levels, 1 if nodes else 0))]
    for i, comp in enumerate(comps):
        strata[level[i]].update(comp)
    return Stratification(tuple(frozenset(s) for s in strata))


def check_plb(program: Program) -> None:
    """Raise :class:`NotPropositional` unless every transport predicate is 0-ary."""
    bad = [(n, a) for n, a in program.transport_sig if a != 0]
    if bad:
        raise NotPropositional(bad)


def validate(program: Program) -> Stratification:
    """Run every static check; raise the first violation, return the stratification."""
    for rule in program.rules:
        check_rule(rule)
    return stratify(program)


def diagnose(program: Program) -> list[D2CError]:
    """Collect every static violation instead of stopping at the first."""
    problems: list[D2CError] = []
    for rule in program.rules:
        try:
            check_rule(rule)
        except D2CError as exc:
            problems.append(exc)
    try:
        stratify(program)
    except D2CError as exc:
        problems.append(exc)
    return problems
