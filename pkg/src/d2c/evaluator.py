"""One local computation step of a DDS node.

A step evaluates the shared program over the node's input DB, its previous
state DB, the previous incoming message and the current incoming message.
State strata are saturated in order with semi-naive iteration; transport heads
are collected last and never feed back into the step. Rules carrying a choice
predicate branch the evaluation: every maximal selection consistent with the
functional dependency yields its own :class:`StepOutcome`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import ChoiceScopeError, RecipientError
from .lang.syntax import Atom, Const, Kind, Program, Var
from .lang.validate import Stratification, validate

Fact = tuple[str, tuple[str, ...]]


@dataclass(frozen=True, order=True)
class Message:
    """A ground transport fact together with a node label (sender or recipient)."""

    fact: Fact
    label: str

    def __str__(self) -> str:
        pred, args = self.fact
        body = f"{pred}({','.join(args)})" if args else pred
        return f"{body}@{self.label}"


@dataclass(frozen=True)
class StepOutcome:
    new_state: frozenset[Fact]
    outgoing: frozenset[Message]
    choice_witness: tuple = ()

    def sort_key(self):
        return (sorted(self.new_state), sorted(self.outgoing), self.choice_witness)


@dataclass(frozen=True)
class EvalContext:
    program: Program
    self_id: str
    neighbors: frozenset[str] = frozenset()
    stratification: Optional[Stratification] = field(default=None, compare=False)

    def rigid_facts(self) -> set[Fact]:
        facts = {("my_name", (self.self_id,))}
        facts |= {("my_neighbor", (n,)) for n in self.neighbors}
        return facts


def active_domain(ctx: EvalContext, input_db, prev_state, msg: Optional[Message]) -> set[str]:
    """Constants a rule may be instantiated with during one step."""
    dom = set(ctx.program.constants()) | {ctx.self_id} | set(ctx.neighbors)
    for _, args in list(input_db) + list(prev_state):
        dom.update(args)
    if msg is not None:
        dom.update(msg.fact[1])
        dom.add(msg.label)
    return dom


# -- compiled rules -----------------------------------------------------------

CUR, PREV, INPUT, MSG, PREVMSG = "cur", "prev", "input", "msg", "prevmsg"


def _source(atom: Atom, prev: bool) -> str:
    if atom.kind is Kind.TRANSPORT:
        return PREVMSG if prev else MSG
    if atom.kind is Kind.INPUT:
        return INPUT
    return PREV if prev else CUR


@dataclass
class _Compiled:
    index: int
    head: Atom
    transport: bool
    positives: list[tuple[str, Atom]]
    negatives: list[tuple[str, Atom]]
    constraints: list
    domain: tuple[Var, ...] = ()
    range: tuple[Var, ...] = ()
    has_choice: bool = False


@dataclass
class _Group:
    rules: list[_Compiled]
    preds: frozenset[str]


_ORDER = {MSG: 0, PREVMSG: 1, INPUT: 2, PREV: 3, CUR: 4}


def _compile(program: Program, strat: Stratification) -> list[_Group]:
    groups: list[_Group] = [_Group([], s) for s in strat.strata]
    transport = _Group([], frozenset())
    for i, r in enumerate(program.rules):
        pos = [(_source(l.atom, l.prev), l.atom) for l in r.literals if l.positive]
        pos.sort(key=lambda p: _ORDER[p[0]])
        neg = [(_source(l.atom, l.prev), l.atom) for l in r.literals if not l.positive]
        cr = _Compiled(
            index=i,
            head=r.head,
            transport=r.head.kind is Kind.TRANSPORT,
            positives=pos,
            negatives=neg,
            constraints=list(r.constraints),
        )
        if r.choice is not None:
            cr.domain, cr.range, cr.has_choice = r.choice.domain, r.choice.range, True
        if cr.transport:
            transport.rules.append(cr)
        else:
            groups[strat.level(r.head.pred)].rules.append(cr)
    return [g for g in groups if g.rules] + ([transport] if transport.rules else [])


_PLANS: dict[int, tuple[Program, Stratification, list[_Group]]] = {}


def _plan(ctx: EvalContext) -> list[_Group]:
    key = id(ctx.program)
    hit = _PLANS.get(key)
    if hit is not None and hit[0] is ctx.program and (
        ctx.stratification is None or hit[1] == ctx.stratification
    ):
        return hit[2]
    strat = ctx.stratification or validate(ctx.program)
    groups = _compile(ctx.program, strat)
    _PLANS[key] = (ctx.program, strat, groups)
    return groups


# -- matching -----------------------------------------------------------------


def _resolve(term, subst):
    if isinstance(term, Var):
        return subst.get(term)
    return term.name


def _match(atom: Atom, args: tuple[str, ...], label: Optional[str], subst: dict) -> Optional[dict]:
    out = subst
    copied = False
    terms = atom.args if atom.label is None else atom.args + (atom.label,)
    values = args if atom.label is None else args + (label,)
    for t, v in zip(terms, values):
        if isinstance(t, Const):
            if t.name != v:
                return None
            continue
        bound = out.get(t)
        if bound is None:
            if not copied:
                out = dict(out)
                copied = True
            out[t] = v
        elif bound != v:
            return None
    return out


def _ground(atom: Atom, subst) -> tuple[tuple[str, ...], Optional[str]]:
    args = tuple(_resolve(t, subst) for t in atom.args)
    label = _resolve(atom.label, subst) if atom.label is not None else None
    return args, label


class _Sources:
    def __init__(self, cur, prev, inp, msg, prev_msg):
        self.cur = cur  # pred -> set(args), mutated during saturation
        self.prev = prev
        self.inp = inp
        self.msg = msg
        self.prev_msg = prev_msg

    def candidates(self, src: str, atom: Atom, delta=None):
        if src == MSG or src == PREVMSG:
            m = self.msg if src == MSG else self.prev_msg
            if m is not None and m.fact[0] == atom.pred and len(m.fact[1]) == atom.arity:
                yield m.fact[1], m.label
            return
        if src == CUR:
            table = delta if delta is not None else self.cur
        elif src == PREV:
            table = self.prev
        else:
            table = self.inp
        for args in table.get(atom.pred, ()):
            yield args, None

    def holds(self, src: str, atom: Atom, subst) -> bool:
        args, label = _ground(atom, subst)
        if src == MSG or src == PREVMSG:
            m = self.msg if src == MSG else self.prev_msg
            return m is not None and m.fact == (atom.pred, args) and m.label == label
        table = {CUR: self.cur, PREV: self.prev, INPUT: self.inp}[src]
        return args in table.get(atom.pred, ())


def _index(facts) -> dict[str, set]:
    idx: dict[str, set] = {}
    for pred, args in facts:
        idx.setdefault(pred, set()).add(args)
    return idx


def _instantiations(cr: _Compiled, src: _Sources, delta_pos: Optional[int] = None, delta=None) -> Iterator[dict]:
    positives = cr.positives

    def join(i: int, subst: dict):
        if i == len(positives):
            yield subst
            return
        kind, atom = positives[i]
        d = delta if i == delta_pos else None
        for args, label in list(src.candidates(kind, atom, d)):
            s = _match(atom, args, label, subst)
            if s is not None:
                yield from join(i + 1, s)

    for subst in join(0, {}):
        if any(_resolve(c.left, subst) == _resolve(c.right, subst) for c in cr.constraints):
            continue
        if any(src.holds(kind, atom, subst) for kind, atom in cr.negatives):
            continue
        yield subst


def _choice_key(cr: _Compiled, subst) -> tuple[tuple, tuple]:
    try:
        dom = tuple(subst[v] for v in cr.domain)
        rng = tuple(subst[v] for v in cr.range)
    except KeyError as exc:
        raise ChoiceScopeError(f"choice variable {exc.args[0]} unbound in rule {cr.index}") from None
    return dom, rng


# -- evaluation ---------------------------------------------------------------


@dataclass
class _Branch:
    cur: dict[str, set]
    out: set
    commits: dict

    def copy(self) -> "_Branch":
        return _Branch({k: set(v) for k, v in self.cur.items()}, set(self.out), dict(self.commits))


def _fire(cr: _Compiled, subst, branch: _Branch, ctx: EvalContext, new: dict) -> None:
    args, label = _ground(cr.head, subst)
    if cr.transport:
        if label != ctx.self_id and label not in ctx.neighbors:
            raise RecipientError(ctx.self_id, Message((cr.head.pred, args), label))
        branch.out.add(Message((cr.head.pred, args), label))
        return
    if args not in branch.cur.get(cr.head.pred, ()):
        new.setdefault(cr.head.pred, set()).add(args)


def _allowed(cr: _Compiled, subst, commits) -> bool:
    if not cr.has_choice:
        return True
    dom, rng = _choice_key(cr, subst)
    return commits.get((cr.index, dom)) == rng


def _saturate(group: _Group, branch: _Branch, src: _Sources, ctx: EvalContext) -> None:
    src.cur = branch.cur
    delta = None
    while True:
        new: dict[str, set] = {}
        for cr in group.rules:
            if delta is None:
                for subst in _instantiations(cr, src):
                    if _allowed(cr, subst, branch.commits):
                        _fire(cr, subst, branch, ctx, new)
                continue
            for pos, (kind, atom) in enumerate(cr.positives):
                if kind != CUR or atom.pred not in delta:
                    continue
                for subst in _instantiations(cr, src, pos, delta):
                    if _allowed(cr, subst, branch.commits):
                        _fire(cr, subst, branch, ctx, new)
        if not new:
            return
        for pred, rows in new.items():
            branch.cur.setdefault(pred, set()).update(rows)
        delta = new


def _open_choices(group: _Group, branch: _Branch, src: _Sources) -> dict:
    src.cur = branch.cur
    pending: dict[tuple, set] = {}
    for cr in group.rules:
        if not cr.has_choice:
            continue
        for subst in _instantiations(cr, src):
            dom, rng = _choice_key(cr, subst)
            if (cr.index, dom) not in branch.commits:
                pending.setdefault((cr.index, dom), set()).add(rng)
    return pending


def _run_group(group: _Group, branch: _Branch, src: _Sources, ctx: EvalContext) -> list[_Branch]:
    done = []
    stack = [branch]
    while stack:
        b = stack.pop()
        _saturate(group, b, src, ctx)
        pending = _open_choices(group, b, src)
        if not pending:
            done.append(b)
            continue
        key = min(pending)
        for rng in sorted(pending[key], reverse=True):
            nb = b.copy()
            nb.commits[key] = rng
            stack.append(nb)
    return done


def step(
    ctx: EvalContext,
    input_db,
    prev_state,
    prev_msg: Optional[Message],
    msg: Message,
) -> tuple[StepOutcome, ...]:
    """All outcomes of one activation of ``ctx.self_id`` on receiving ``msg``.

    Outcomes are returned in a deterministic order; a program without choice
    predicates always yields exactly one.
    """
    groups = _plan(ctx)
    src = _Sources(None, _index(prev_state), _index(input_db), msg, prev_msg)
    branches = [_Branch(_index(ctx.rigid_facts()), set(), {})]
    for group in groups:
        nxt = []
        for b in branches:
            nxt.extend(_run_group(group, b, src, ctx))
        branches = nxt
    outcomes = set()
    for b in branches:
        state = frozenset((p, a) for p, rows in b.cur.items() for a in rows)
        witness = tuple(sorted((i, dom, rng) for (i, dom), rng in b.commits.items()))
        outcomes.add(StepOutcome(state, frozenset(b.out), witness))
    return tuple(sorted(outcomes, key=StepOutcome.sort_key))


def stdb(outcome: StepOutcome) -> frozenset[Fact]:
    """New state DB of an outcome."""
    return outcome.new_state


def trdb(outcome: StepOutcome, recipient: str) -> frozenset[Message]:
    return frozenset(m for m in outcome.outgoing if m.label == recipient)


def trdbtup(outcome: StepOutcome, recipient: str) -> frozenset[Fact]:
    """Transport facts addressed to ``recipient``, label dropped."""
    return frozenset(m.fact for m in outcome.outgoing if m.label == recipient)
