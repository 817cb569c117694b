"""Global semantics of a DDS: network, channels, configurations and the c-step relation."""

from __future__ import annotations

import itertools
import random
import weakref
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Optional

from .errors import ScenarioError
from .evaluator import EvalContext, Fact, Message, StepOutcome, step, trdbtup
from .lang.parser import format_fact
from .lang.syntax import RESERVED_STATE, RESERVED_TRANSPORT, Kind, Program
from .lang.validate import Stratification, validate

QUEUE, MULTISET = "queue", "multiset"
CLOSED, INTERACTIVE, AUTONOMOUS = "closed", "interactive", "autonomous"
START: Fact = ("start", ())

Edge = tuple[str, str]


@dataclass(frozen=True)
class Network:
    nodes: tuple[str, ...]
    edges: frozenset[frozenset[str]] = frozenset()

    @classmethod
    def of(cls, nodes: Iterable[str], edges: Iterable[Iterable[str]] = ()) -> "Network":
        nodes = tuple(sorted(set(nodes)))
        und = set()
        for e in edges:
            pair = frozenset(e)
            if not pair <= set(nodes):
                raise ScenarioError(f"edge {sorted(pair)} connects unknown nodes")
            if len(pair) == 2:
                und.add(pair)
        return cls(nodes, frozenset(und))

    def neighbors(self, node: str) -> frozenset[str]:
        return frozenset(m for e in self.edges if node in e for m in e if m != node)

    def channels(self) -> list[Edge]:
        out = [(n, n) for n in self.nodes]
        for e in self.edges:
            a, b = sorted(e)
            out += [(a, b), (b, a)]
        return sorted(out)

    def incoming(self, node: str) -> list[Edge]:
        return sorted([(node, node)] + [(m, node) for m in self.neighbors(node)])


@dataclass(eq=False)
class Scenario:
    program: Program
    network: Network
    init: frozenset[Fact] = frozenset()
    channel_kind: str = QUEUE
    policy: str = CLOSED
    input_pool: tuple[frozenset[Fact], ...] = (frozenset(),)
    name: str = ""

    def validate(self) -> Stratification:
        strat = validate(self.program)
        if self.channel_kind not in (QUEUE, MULTISET):
            raise ScenarioError(f"unknown channel kind {self.channel_kind!r}")
        if self.policy not in (CLOSED, INTERACTIVE, AUTONOMOUS):
            raise ScenarioError(f"unknown input policy {self.policy!r}")
        if not self.network.nodes:
            raise ScenarioError("network has no nodes")
        for pred, args in self.init:
            if pred in RESERVED_STATE:
                raise ScenarioError(f"initial DB mentions reserved predicate {pred}")
            kind = self.program.kind_of(pred)
            if kind is not None and kind is not Kind.STATE:
                raise ScenarioError(f"initial fact {format_fact((pred, args))} is not a state fact")
        if self.policy == CLOSED and any(self.input_pool):
            raise ScenarioError("closed policy admits only the empty input")
        if not self.input_pool:
            raise ScenarioError("input pool is empty")
        for db in self.input_pool:
            for pred, args in db:
                if self.program.kind_of(pred) not in (Kind.INPUT, None):
                    raise ScenarioError(f"input fact {format_fact((pred, args))} is not over the input signature")
        return strat

    def rigid_constants(self) -> frozenset[str]:
        consts = set(self.program.constants()) | set(self.network.nodes)
        for _, args in self.init:
            consts.update(args)
        for db in self.input_pool:
            for _, args in db:
                consts.update(args)
        return frozenset(consts)


_P = (1 << 61) - 1
_B = 1_000_003
_BINV = pow(_B, _P - 2, _P)


class Chan(tuple):
    """Channel contents: a tuple of facts whose hash is updated incrementally.

    The hash is the polynomial ``sum(h(x_i) * B**i) mod P``, so dropping the
    head or appending messages costs O(1) rather than rehashing the whole
    channel, which matters once channels grow to thousands of messages.
    Sorted (multiset) contents also keep a count table, from which the same
    polynomial is summed run by run.
    """

    _hv: Optional[int] = None
    _counts: Optional[dict] = None

    def __hash__(self) -> int:
        hv = self._hv
        if hv is None:
            hv = 0
            for x in reversed(self):
                hv = (hv * _B + hash(x)) % _P
            self._hv = hv
        return hv

    def popleft(self) -> "Chan":
        out = Chan(self[1:])
        if self._hv is not None:
            out._hv = (self._hv - hash(self[0])) * _BINV % _P
        return out

    def extend(self, facts) -> "Chan":
        out = Chan(self + tuple(facts))
        if self._hv is not None:
            hv, scale = self._hv, pow(_B, len(self), _P)
            for f in facts:
                hv = (hv + hash(f) * scale) % _P
                scale = scale * _B % _P
            out._hv = hv
        return out

    # -- sorted contents ------------------------------------------------------

    def counts(self) -> dict:
        if self._counts is None:
            table: dict = {}
            for x in self:
                table[x] = table.get(x, 0) + 1
            self._counts = table
        return self._counts

    @classmethod
    def from_counts(cls, table: dict) -> "Chan":
        runs = sorted((x, n) for x, n in table.items() if n)
        out = cls(itertools.chain.from_iterable(itertools.repeat(x, n) for x, n in runs))
        hv, scale = 0, 1
        for x, n in runs:
            span = pow(_B, n, _P)
            hv = (hv + hash(x) * scale * (span - 1) * _GEOM) % _P
            scale = scale * span % _P
        out._hv = hv
        out._counts = dict(runs)
        return out

    def bag_remove(self, fact) -> "Chan":
        table = dict(self.counts())
        table[fact] -= 1
        return Chan.from_counts(table)

    def bag_add(self, facts) -> "Chan":
        table = dict(self.counts())
        for f in facts:
            table[f] = table.get(f, 0) + 1
        return Chan.from_counts(table)


_GEOM = pow(_B - 1, _P - 2, _P)


def _chans(channels) -> tuple:
    return tuple((e, c if type(c) is Chan else Chan(c)) for e, c in channels)


@lru_cache(maxsize=65536)
def _fact_constants(facts: frozenset) -> frozenset[str]:
    return frozenset(a for _, args in facts for a in args)


@dataclass(frozen=True)
class GlobalConfig:
    states: tuple[tuple[str, frozenset[Fact]], ...]
    prev_msgs: tuple[tuple[str, Optional[Message]], ...]
    channels: tuple[tuple[Edge, tuple[Fact, ...]], ...]

    def __post_init__(self):
        if not all(type(c) is Chan for _, c in self.channels):
            object.__setattr__(self, "channels", _chans(self.channels))

    @cached_property
    def _hash(self) -> int:
        return hash((self.states, self.prev_msgs, self.channels))

    def __hash__(self) -> int:
        return self._hash

    @cached_property
    def _state_map(self) -> dict:
        return dict(self.states)

    @cached_property
    def _prev_map(self) -> dict:
        return dict(self.prev_msgs)

    @cached_property
    def _chan_map(self) -> dict:
        return dict(self.channels)

    def state(self, node: str) -> frozenset[Fact]:
        return self._state_map[node]

    def prev_msg(self, node: str) -> Optional[Message]:
        return self._prev_map[node]

    def channel(self, src: str, dst: str) -> tuple[Fact, ...]:
        return self._chan_map[(src, dst)]

    def pending(self) -> int:
        return sum(len(c) for _, c in self.channels)

    def max_channel(self) -> int:
        return max((len(c) for _, c in self.channels), default=0)

    def constants(self) -> set[str]:
        out: set[str] = set()
        for _, facts in self.states:
            out |= _fact_constants(facts)
        for _, m in self.prev_msgs:
            if m is not None:
                out.update(m.fact[1])
        for _, content in self.channels:
            for _, args in set(content):
                out.update(args)
        return out

    def rename(self, mapping: dict[str, str]) -> "GlobalConfig":
        """Apply a constant renaming (node ids are expected to be fixed by ``mapping``)."""

        def rf(fact):
            return (fact[0], tuple(mapping.get(a, a) for a in fact[1]))

        def rm(m):
            return None if m is None else Message(rf(m.fact), mapping.get(m.label, m.label))

        return GlobalConfig(
            tuple((n, frozenset(rf(f) for f in facts)) for n, facts in self.states),
            tuple((n, rm(m)) for n, m in self.prev_msgs),
            tuple((e, tuple(rf(f) for f in c)) for e, c in self.channels),
        )


def normalize_channels(config: GlobalConfig, kind: str) -> GlobalConfig:
    """Multiset channels are stored sorted; queues keep their order."""
    if kind == QUEUE:
        return config
    return GlobalConfig(
        config.states,
        config.prev_msgs,
        tuple((e, tuple(sorted(c))) for e, c in config.channels),
    )


@dataclass(frozen=True, order=True)
class Transition:
    edge: Edge
    consumed: Fact
    input_index: int
    outcome_index: int
    emissions: tuple[tuple[Edge, tuple[Fact, ...]], ...] = ()
    witness: tuple = field(default=(), compare=True)

    def emitted(self) -> int:
        return sum(len(msgs) for _, msgs in self.emissions)

    def __str__(self) -> str:
        s, d = self.edge
        sent = "; ".join(
            f"{a}->{b}: {', '.join(format_fact(f) for f in msgs)}" for (a, b), msgs in self.emissions
        )
        text = f"{s}->{d} consumes {format_fact(self.consumed)}"
        if self.input_index:
            text += f" [input #{self.input_index}]"
        return text + (f", sends {sent}" if sent else "")


class Drts:
    """Successor machinery for one scenario, with a memo of local steps."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.strat = scenario.validate()
        net = scenario.network
        self.contexts = {
            n: EvalContext(scenario.program, n, net.neighbors(n), self.strat) for n in net.nodes
        }
        self.edges = net.channels()
        # the last received message only matters to prev-scoped transport literals
        self.track_prev = any(
            lit.atom.kind is Kind.TRANSPORT for r in scenario.program.rules for lit in r.prev_body
        )
        self._memo: dict = {}
        self._exp_memo: dict = {}
        self._slot = {e: i for i, e in enumerate(self.edges)}
        self._node_index = {n: i for i, n in enumerate(scenario.network.nodes)}

    def initial_config(self) -> GlobalConfig:
        net = self.scenario.network
        states = []
        for n in net.nodes:
            facts = set(self.scenario.init) | self.contexts[n].rigid_facts()
            states.append((n, frozenset(facts)))
        channels = tuple((e, (START,) if e[0] == e[1] else ()) for e in self.edges)
        return GlobalConfig(tuple(states), tuple((n, None) for n in net.nodes), channels)

    def inputs(self, fixed_input: Optional[int] = None) -> list[tuple[int, frozenset[Fact]]]:
        pool = self.scenario.input_pool
        policy = self.scenario.policy
        if policy == CLOSED:
            return [(0, frozenset())]
        if policy == INTERACTIVE:
            return list(enumerate(pool))
        if fixed_input is None:
            if len(pool) != 1:
                raise ValueError("autonomous policy needs the run's fixed input index")
            fixed_input = 0
        return [(fixed_input, pool[fixed_input])]

    def local_step(self, node, input_db, state, prev_msg, msg) -> tuple[StepOutcome, ...]:
        key = (node, input_db, state, prev_msg, msg)
        hit = self._memo.get(key)
        if hit is None:
            if len(self._memo) > 500_000:
                self._memo.clear()
            hit = step(self.contexts[node], input_db, state, prev_msg, msg)
            self._memo[key] = hit
        return hit

    def _expansions(self, node, input_db, state, prev_msg, msg):
        key = (node, input_db, state, prev_msg, msg)
        hit = self._exp_memo.get(key)
        if hit is None:
            if len(self._exp_memo) > 500_000:
                self._exp_memo.clear()
            queue = self.scenario.channel_kind == QUEUE
            hit = [
                (oi, o, tuple(self._emission_orders(node, o, queue)))
                for oi, o in enumerate(self.local_step(node, input_db, state, prev_msg, msg))
            ]
            self._exp_memo[key] = hit
        return hit

    def successors(
        self, config: GlobalConfig, fixed_input: Optional[int] = None
    ) -> list[tuple[Transition, GlobalConfig]]:
        queue = self.scenario.channel_kind == QUEUE
        inputs = self.inputs(fixed_input)
        slot = self._slot
        nodes = self._node_index
        out = []
        for j, (edge, content) in enumerate(config.channels):
            if not content:
                continue
            s, d = edge
            di = nodes[d]
            state, prev = config.states[di][1], config.prev_msgs[di][1]
            consumable = [content[0]] if queue else sorted(content.counts())
            for t in consumable:
                rest = content.popleft() if queue else content.bag_remove(t)
                msg = Message(t, s)
                kept = msg if self.track_prev else None
                for ii, db in inputs:
                    for oi, o, orders in self._expansions(d, db, state, prev, msg):
                        states = config.states[:di] + ((d, o.new_state),) + config.states[di + 1 :]
                        prevs = config.prev_msgs
                        if kept is not prev:
                            prevs = prevs[:di] + ((d, kept),) + prevs[di + 1 :]
                        for emissions in orders:
                            chans = list(config.channels)
                            chans[j] = (edge, rest)
                            for e, msgs in emissions:
                                k = slot[e]
                                if queue:
                                    chans[k] = (e, chans[k][1].extend(msgs))
                                else:
                                    chans[k] = (e, chans[k][1].bag_add(msgs))
                            new = GlobalConfig(states, prevs, tuple(chans))
                            out.append((Transition(edge, t, ii, oi, emissions, o.choice_witness), new))
        out.sort(key=lambda p: p[0])
        return out

    def _emission_orders(self, node: str, outcome: StepOutcome, queue: bool):
        per_channel = []
        for m in sorted({msg.label for msg in outcome.outgoing}):
            facts = sorted(trdbtup(outcome, m))
            orders = list(itertools.permutations(facts)) if queue else [tuple(facts)]
            per_channel.append([((node, m), order) for order in orders])
        for combo in itertools.product(*per_channel):
            yield tuple(combo)


_ENGINES: "weakref.WeakKeyDictionary[Scenario, Drts]" = weakref.WeakKeyDictionary()


def engine(scenario: Scenario) -> Drts:
    eng = _ENGINES.get(scenario)
    if eng is None:
        eng = _ENGINES[scenario] = Drts(scenario)
    return eng


def initial_config(scenario: Scenario) -> GlobalConfig:
    return engine(scenario).initial_config()


def successors(scenario: Scenario, config: GlobalConfig, fixed_input: Optional[int] = None):
    return engine(scenario).successors(config, fixed_input)


def is_terminated(config: GlobalConfig) -> bool:
    return all(not c for _, c in config.channels)


@dataclass
class Trace:
    configs: list[GlobalConfig]
    transitions: list[Transition]
    fixed_input: Optional[int] = None

    @property
    def final(self) -> GlobalConfig:
        return self.configs[-1]


def run(scenario: Scenario, seed: int, max_steps: int, fixed_input: Optional[int] = None) -> Trace:
    """Pseudorandom walk, uniform over successors, reproducible from ``seed``."""
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    rng = random.Random(seed)
    eng = engine(scenario)
    if scenario.policy == AUTONOMOUS and fixed_input is None:
        fixed_input = rng.randrange(len(scenario.input_pool))
    config = eng.initial_config()
    trace = Trace([config], [], fixed_input)
    for _ in range(max_steps):
        if is_terminated(config):
            break
        succ = eng.successors(config, fixed_input)
        tr, config = succ[rng.randrange(len(succ))]
        trace.transitions.append(tr)
        trace.configs.append(config)
    return trace


def replay(scenario: Scenario, transitions: Iterable[Transition], fixed_input: Optional[int] = None) -> Trace:
    eng = engine(scenario)
    config = eng.initial_config()
    trace = Trace([config], [], fixed_input)
    for tr in transitions:
        for cand, nxt in eng.successors(config, fixed_input):
            if cand == tr:
                config = nxt
                break
        else:
            raise ScenarioError(f"transition not enabled during replay: {tr}")
        trace.transitions.append(tr)
        trace.configs.append(config)
    return trace
