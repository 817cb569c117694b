"""Communicating finite state machines and the reductions to and from PLB-DDSs."""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Optional

from .drts import (
    AUTONOMOUS,
    CLOSED,
    MULTISET,
    QUEUE,
    Edge,
    GlobalConfig,
    Network,
    Scenario,
    engine,
)
from .errors import BoundExceeded, D2CError, MultiNodeError, ScenarioError
from .evaluator import Message
from .lang.parser import parse_facts, parse_program
from .lang.validate import check_plb
from .termcheck import REACHABLE, Budget, Verdict, canonicalize, explore

READ, WRITE = "read", "write"


@dataclass(frozen=True, order=True)
class CfsmTransition:
    src: str
    action: str
    channel: Edge
    message: str
    dst: str

    def __str__(self) -> str:
        s, d = self.channel
        op = "?" if self.action == READ else "!"
        return f"{self.src} -{s}->{d}{op}{self.message}-> {self.dst}"


@dataclass
class NodeMachine:
    states: frozenset[str]
    initial: str
    transitions: tuple[CfsmTransition, ...] = ()
    auxiliary: frozenset[str] = frozenset()


@dataclass(eq=False)
class Cfsm:
    network: Network
    alphabet: frozenset[str]
    machines: dict[str, NodeMachine]
    initial_channels: dict[Edge, tuple[str, ...]] = field(default_factory=dict)
    channel_kind: str = QUEUE

    def validate(self) -> None:
        chans = set(self.network.channels())
        if set(self.machines) != set(self.network.nodes):
            raise ScenarioError("every network node needs exactly one machine")
        for node, m in self.machines.items():
            if m.initial not in m.states:
                raise ScenarioError(f"{node}: initial state {m.initial} is not a state")
            if m.initial in m.auxiliary:
                raise ScenarioError(f"{node}: initial state {m.initial} is auxiliary")
            if not m.auxiliary <= m.states:
                raise ScenarioError(f"{node}: auxiliary states must be states")
            for t in m.transitions:
                if t.src not in m.states or t.dst not in m.states:
                    raise ScenarioError(f"{node}: transition {t} uses an unknown state")
                if t.channel not in chans:
                    raise ScenarioError(f"{node}: transition {t} uses a missing channel")
                incident = t.channel[1] if t.action == READ else t.channel[0]
                if t.action not in (READ, WRITE) or incident != node:
                    raise ScenarioError(f"{node}: transition {t} is not incident to the node")
                if t.message not in self.alphabet:
                    raise ScenarioError(f"{node}: message {t.message} not in the alphabet")
        for e, msgs in self.initial_channels.items():
            if e not in chans or not set(msgs) <= self.alphabet:
                raise ScenarioError(f"bad initial channel content on {e}")

    def state_count(self) -> int:
        return sum(len(m.states) for m in self.machines.values())


TargetSet = dict[str, frozenset[str]]


@dataclass(frozen=True)
class CfsmConfig:
    states: tuple[tuple[str, str], ...]
    channels: tuple[tuple[Edge, tuple[str, ...]], ...]

    def max_channel(self) -> int:
        return max((len(c) for _, c in self.channels), default=0)


class _Words:
    """Hash-consed message words, so a queue is a single integer.

    Word 0 is empty; every other word is its parent extended by one message.
    Equal words always receive the same id, which keeps configuration hashing
    constant-time even when a machine writes without bound.
    """

    def __init__(self):
        self.parent = [0]
        self.last: list[Optional[str]] = [None]
        self.first: list[Optional[str]] = [None]
        self.size = [0]
        self._child: dict[tuple[int, str], int] = {}
        self._tail: dict[int, int] = {}
        self._lock = threading.Lock()

    def _append(self, w: int, m: str) -> int:
        k = self._child.get((w, m))
        if k is None:
            k = len(self.parent)
            self.parent.append(w)
            self.last.append(m)
            self.first.append(m if w == 0 else self.first[w])
            self.size.append(self.size[w] + 1)
            self._child[(w, m)] = k
        return k

    def append(self, w: int, m: str) -> int:
        with self._lock:
            return self._append(w, m)

    def tail(self, w: int) -> int:
        with self._lock:
            path = []
            while w and self.parent[w] and w not in self._tail:
                path.append(w)
                w = self.parent[w]
            t = 0 if not w or not self.parent[w] else self._tail[w]
            for x in reversed(path):
                t = self._append(t, self.last[x])
                self._tail[x] = t
            return t

    def encode(self, messages) -> int:
        w = 0
        for m in messages:
            w = self.append(w, m)
        return w

    def decode(self, w: int) -> tuple[str, ...]:
        out = []
        while w:
            out.append(self.last[w])
            w = self.parent[w]
        return tuple(reversed(out))


class _Space:
    """Compact search states: ``(node states, channel contents)``.

    Queue contents are word ids; multiset contents are sorted count tables.
    """

    def __init__(self, cfsm: Cfsm, kind: str):
        self.cfsm = cfsm
        self.queue = kind == QUEUE
        self.words = _Words()
        self.edges = tuple(cfsm.network.channels())
        self.slot = {e: i for i, e in enumerate(self.edges)}
        self.index: dict[tuple[str, str], list[CfsmTransition]] = {}
        for node, m in cfsm.machines.items():
            for t in sorted(m.transitions):
                self.index.setdefault((node, t.src), []).append(t)

    def initial(self):
        chans = []
        for e in self.edges:
            msgs = self.cfsm.initial_channels.get(e, ())
            if self.queue:
                chans.append(self.words.encode(msgs))
            else:
                chans.append(_count(msgs))
        return tuple(self.cfsm.machines[n].initial for n in self.cfsm.network.nodes), tuple(chans)

    def size(self, c) -> int:
        if self.queue:
            return max((self.words.size[w] for w in c[1]), default=0)
        return max((sum(n for _, n in t) for t in c[1]), default=0)

    def empty(self, c) -> bool:
        return not any(c[1])

    def successors(self, c):
        states, chans = c
        out = []
        for i, (node, q) in enumerate(zip(self.cfsm.network.nodes, states)):
            for t in self.index.get((node, q), ()):
                j = self.slot[t.channel]
                content = chans[j]
                if self.queue:
                    if t.action == READ:
                        if not content or self.words.first[content] != t.message:
                            continue
                        rest = self.words.tail(content)
                    else:
                        rest = self.words.append(content, t.message)
                else:
                    table = dict(content)
                    if t.action == READ:
                        if not table.get(t.message):
                            continue
                        table[t.message] -= 1
                    else:
                        table[t.message] = table.get(t.message, 0) + 1
                    rest = tuple(sorted((m, n) for m, n in table.items() if n))
                new = (states[:i] + (t.dst,) + states[i + 1 :], chans[:j] + (rest,) + chans[j + 1 :])
                out.append(((node, t), new))
        return out

    def decode(self, c) -> CfsmConfig:
        states, chans = c
        out = []
        for e, content in zip(self.edges, chans):
            if self.queue:
                out.append((e, self.words.decode(content)))
            else:
                out.append((e, tuple(m for m, n in content for _ in range(n))))
        return CfsmConfig(tuple(zip(self.cfsm.network.nodes, states)), tuple(out))


def _count(messages) -> tuple[tuple[str, int], ...]:
    table: dict[str, int] = {}
    for m in messages:
        table[m] = table.get(m, 0) + 1
    return tuple(sorted(table.items()))


def check_targets(cfsm: Cfsm, targets: TargetSet) -> None:
    for node, accepting in targets.items():
        m = cfsm.machines.get(node)
        if m is None:
            raise ScenarioError(f"target for unknown node {node}")
        if accepting & m.auxiliary:
            raise ScenarioError(f"{node}: accepting states overlap auxiliary states")


def cfsm_reach(
    cfsm: Cfsm,
    targets: TargetSet,
    channel_kind: Optional[str] = None,
    budget: Budget = Budget(),
    threads: int = 1,
) -> Verdict:
    """Search for a configuration with every channel empty, every node accepting and none auxiliary."""
    cfsm.validate()
    check_targets(cfsm, targets)
    space = _Space(cfsm, channel_kind or cfsm.channel_kind)
    nodes = cfsm.network.nodes
    accepting = [targets.get(n, frozenset()) - cfsm.machines[n].auxiliary for n in nodes]

    def goal(c) -> bool:
        return space.empty(c) and all(q in acc for q, acc in zip(c[0], accepting))

    v = explore(space.initial(), space.successors, goal, lambda c: c, budget, space.size, REACHABLE, threads)
    if v.final is not None:
        v.final = space.decode(v.final)
    return v


# -- PLB-DDS -> CFSM ------------------------------------------------------------


def dds_to_cfsm(
    scenario: Scenario,
    bound: int,
    fixed_input: Optional[int] = None,
    max_states: int = 200_000,
) -> tuple[Cfsm, TargetSet]:
    """Compile a propositional lazy-bounded scenario into a CFSM over the same network.

    Node states are the canonical local configurations (state DB plus last
    message when it matters) met while exploring each node in isolation. Every
    reception becomes a read transition followed by a chain of fresh auxiliary
    states, one write per emitted message.
    """
    check_plb(scenario.program)
    if bound < 0:
        raise ValueError("bound must be non-negative")
    eng = engine(scenario)
    if scenario.policy == AUTONOMOUS and fixed_input is None and len(scenario.input_pool) != 1:
        raise ValueError("autonomous scenarios are compiled for one fixed input")
    rigid = scenario.rigid_constants()
    queue = scenario.channel_kind == QUEUE
    alphabet = sorted(name for name, _ in scenario.program.transport_sig)
    init = eng.initial_config()
    machines: dict[str, NodeMachine] = {}
    targets: TargetSet = {}
    for node in scenario.network.nodes:
        machines[node] = _compile_node(eng, node, init, alphabet, rigid, bound, queue, fixed_input, max_states)
        m = machines[node]
        targets[node] = m.states - m.auxiliary
    cfsm = Cfsm(
        scenario.network,
        frozenset(alphabet),
        machines,
        {(n, n): ("start",) for n in scenario.network.nodes},
        scenario.channel_kind,
    )
    cfsm.validate()
    return cfsm, targets


def _local_key(node, state, prev, rigid):
    wrapped = GlobalConfig(((node, state),), ((node, prev),), ())
    canon = canonicalize(wrapped, rigid)
    return canon.states[0][1], canon.prev_msgs[0][1]


def _compile_node(eng, node, init, alphabet, rigid, bound, queue, fixed_input, max_states) -> NodeMachine:
    names: dict[tuple, str] = {}
    start = _local_key(node, init.state(node), init.prev_msg(node), rigid)
    names[start] = "q0"
    todo = [start]
    transitions: set[CfsmTransition] = set()
    chains: dict[tuple, None] = {}
    aux: list[str] = []
    steps = 0
    incoming = eng.scenario.network.incoming(node)
    inputs = eng.inputs(fixed_input)
    while todo:
        local = todo.pop(0)
        state, prev = local
        q = names[local]
        for edge in incoming:
            for m in alphabet:
                msg = Message((m, ()), edge[0])
                for _, db in inputs:
                    for o in eng.local_step(node, db, state, prev, msg):
                        steps += 1
                        free = {a for _, args in o.new_state for a in args} - rigid
                        if len(free) > bound:
                            raise BoundExceeded(node, steps, len(free), bound)
                        nxt = _local_key(node, o.new_state, msg if eng.track_prev else None, rigid)
                        if nxt not in names:
                            if len(names) >= max_states:
                                raise D2CError(f"node {node}: more than {max_states} local states")
                            names[nxt] = f"q{len(names)}"
                            todo.append(nxt)
                        for emissions in eng._emission_orders(node, o, queue):
                            writes = tuple((e, f[0]) for e, facts in emissions for f in facts)
                            chain = (q, edge, m, writes, names[nxt])
                            if chain in chains:
                                continue
                            chains[chain] = None
                            cur = q
                            hops = [(READ, edge, m)] + [(WRITE, e, w) for e, w in writes]
                            for i, (action, e, w) in enumerate(hops):
                                if i == len(hops) - 1:
                                    dst = names[nxt]
                                else:
                                    dst = f"a{len(aux)}"
                                    aux.append(dst)
                                transitions.add(CfsmTransition(cur, action, e, w, dst))
                                cur = dst
    return NodeMachine(
        states=frozenset(names.values()) | frozenset(aux),
        initial="q0",
        transitions=tuple(sorted(transitions)),
        auxiliary=frozenset(aux),
    )


# -- single-node CFSM -> three-node DDS ----------------------------------------

SIM, ACT, TERM = "sim", "act", "term"

_GADGET = """\
% roles: every node runs this program
simulator if my_name(sim).
activator if my_name(act).
terminator if my_name(term).

% persistent machine encoding and flags
trans_read(Q,M,R) if prev trans_read(Q,M,R).
trans_write(Q,M,R) if prev trans_write(Q,M,R).
target(Q) if prev target(Q).
bool(Y) if prev bool(Y).
halted if prev halted.
dead if prev dead.

% simulator: one machine transition per activation
active if simulator prev not halted, not dead.
wake if wakeUp@X, my_neighbor(X).
stay if start@X, my_name(X).
stay if wake, not wenabled.
renabled(M) if trans_read(Q,M,R) prev cur(Q).
wenabled if trans_write(Q,M,R) prev cur(Q).
cur(Q) if stay, active prev cur(Q).
cur(R) if got(M), trans_read(Q,M,R), active, choice(R) prev cur(Q).
wtake(M,R) if wake, trans_write(Q,M,R), active, choice(M,R) prev cur(Q).
cur(R) if wtake(M,R).
dead if got(M), active, not renabled(M).
dead if got(M), simulator prev halted.
halt(Y) if cur(Q), target(Q), bool(Y), active, choice(Y).
halted if halt(true).
stop@term if halt(true).
loop@X if my_name(X), dead.
{messages}
% activator
create(Y) if bool(Y), choice(Y), activator prev not stopCreation.
stopCreation if create(false).
stopCreation if prev stopCreation.
wakeUp@X if my_name(X), create(true).
wakeUp@Y if wakeUp@X, my_name(X), my_neighbor(Y), create(true), X != Y.
wakeUp@Y if start@X, my_name(X), my_neighbor(Y), create(true).

% terminator
wakeUp@X if my_name(X), terminator prev not stopped.
stopped if stop@X, my_neighbor(X).
stopped if prev stopped.
"""

_NAME = re.compile(r"[A-Za-z0-9_]+")


def _const(prefix: str, name: str) -> str:
    if not _NAME.fullmatch(name):
        raise ScenarioError(f"name {name!r} is not an identifier")
    return f"{prefix}_{name}"


def cfsm_to_dds(machine: Cfsm, targets: TargetSet) -> Scenario:
    """Encode a single-node machine as a closed three-node scenario over queues.

    The simulator holds the machine as facts and performs one transition per
    activation; the activator supplies a finite, nondeterministic number of
    wake-ups; the terminator keeps the system alive until the simulator halts
    in an accepting state.
    """
    if len(machine.network.nodes) != 1:
        raise MultiNodeError(f"expected a single-node machine, got {len(machine.network.nodes)} nodes")
    if machine.channel_kind != QUEUE:
        raise ScenarioError("the reduction targets queue channels")
    machine.validate()
    check_targets(machine, targets)
    (node,) = machine.network.nodes
    if any(machine.initial_channels.values()):
        raise ScenarioError("initial channel contents are not supported by the reduction")
    m = machine.machines[node]
    st = lambda q: _const("q", q)  # noqa: E731
    msg = lambda a: _const("m", a)  # noqa: E731

    facts = [f"cur({st(m.initial)})", "bool(true)", "bool(false)"]
    for t in m.transitions:
        rel = "trans_read" if t.action == READ else "trans_write"
        facts.append(f"{rel}({st(t.src)},{msg(t.message)},{st(t.dst)})")
    facts += [f"target({st(q)})" for q in sorted(targets.get(node, ()))]
    per_message = "".join(
        f"got({msg(a)}) if {msg(a)}@X, my_name(X).\n{msg(a)}@X if my_name(X), wtake({msg(a)},R).\n"
        for a in sorted(machine.alphabet)
    )
    text = _GADGET.format(messages=per_message)
    transport = ["start/0", "wakeUp/0", "stop/0", "loop/0"] + [f"{msg(a)}/0" for a in sorted(machine.alphabet)]
    state = [
        "cur/1", "trans_read/3", "trans_write/3", "target/1", "bool/1", "halted/0", "dead/0",
        "simulator/0", "activator/0", "terminator/0", "active/0", "wake/0", "stay/0",
        "renabled/1", "wenabled/0", "wtake/2", "halt/1", "got/1", "create/1",
        "stopCreation/0", "stopped/0",
    ]
    program = parse_program(text, {"input": [], "transport": transport, "state": state})
    scenario = Scenario(
        program=program,
        network=Network.of([SIM, ACT, TERM], [[SIM, ACT], [SIM, TERM]]),
        init=parse_facts("".join(f + ". " for f in facts)),
        channel_kind=QUEUE,
        policy=CLOSED,
        name=f"cfsm_{node}",
    )
    scenario.validate()
    return scenario
