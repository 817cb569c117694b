"""Sometimes-termination checking by breadth-first search over canonical configurations."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Optional

from .drts import AUTONOMOUS, MULTISET, GlobalConfig, Scenario, engine, is_terminated

TERMINATES = "TERMINATES"
REACHABLE = "REACHABLE"
NOT_REACHABLE = "NOT_REACHABLE"
UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class Budget:
    max_configs: Optional[int] = 100_000
    max_channel: Optional[int] = None
    max_depth: Optional[int] = None

    def __post_init__(self):
        for name in ("max_configs", "max_channel", "max_depth"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Verdict:
    kind: str
    witness: Optional[list] = None
    configs_explored: int = 0
    frontier_peak: int = 0
    cap_hit: bool = False
    fixed_input: Optional[int] = None
    final: Any = field(default=None, repr=False)

    @property
    def positive(self) -> bool:
        return self.kind in (TERMINATES, REACHABLE)

    def record(self, witness_json: Optional[Callable] = None) -> dict:
        out: dict[str, Any] = {
            "verdict": self.kind,
            "configsExplored": self.configs_explored,
            "frontierPeak": self.frontier_peak,
        }
        if self.cap_hit:
            out["channelCapHit"] = True
        if self.fixed_input is not None:
            out["fixedInput"] = self.fixed_input
        if self.witness is not None:
            out["witness"] = witness_json(self.witness) if witness_json else [str(w) for w in self.witness]
        return out


# -- canonicalization ---------------------------------------------------------


def _occurrences(config: GlobalConfig, multiset: bool):
    for node, facts in config.states:
        for pred, args in facts:
            yield ("s", node), pred, args
    for node, m in config.prev_msgs:
        if m is not None:
            yield ("p", node, m.label), m.fact[0], m.fact[1]
    for edge, content in config.channels:
        for i, (pred, args) in enumerate(content):
            yield (("c", edge) if multiset else ("c", edge, i)), pred, args


def _refine(colors: dict[str, int], occ) -> dict[str, int]:
    n_colors = len(set(colors.values()))
    while True:
        sigs: dict[str, list] = {c: [] for c in colors}
        for ctx, pred, args, groups in occ:
            pattern = tuple(("n", colors[a]) if a in colors else ("r", a) for a in args)
            for c, pos in groups:
                sigs[c].append((ctx, pred, pattern, pos))
        keyed = {c: (colors[c], tuple(sorted(sigs[c]))) for c in colors}
        ranks = {k: i for i, k in enumerate(sorted(set(keyed.values())))}
        new = {c: ranks[keyed[c]] for c in colors}
        count = len(ranks)
        if count == n_colors:
            return new
        colors, n_colors = new, count


def _config_key(config: GlobalConfig):
    return (
        tuple((n, tuple(sorted(f))) for n, f in config.states),
        tuple((n, None if m is None else (m.fact, m.label)) for n, m in config.prev_msgs),
        config.channels,
    )


def _prefix(rigid: Iterable[str]) -> str:
    prefix = "k"
    while any(re.fullmatch(prefix + r"\d+", r) for r in rigid):
        prefix += "k"
    return prefix


def canonicalize(config: GlobalConfig, rigid: frozenset[str] | set[str], multiset: bool = False) -> GlobalConfig:
    """Rename non-rigid constants to ``k0, k1, ...`` so isomorphic configs coincide.

    Colour refinement orders the constants by an isomorphism-invariant
    signature; remaining ties are broken by individualising each candidate in
    turn and keeping the lexicographically least renamed configuration.
    """
    free = config.constants() - set(rigid)
    if not free:
        return config
    occ = []
    for ctx, pred, args in _occurrences(config, multiset):
        here = sorted(set(args) & free)
        if here:
            groups = tuple((c, tuple(i for i, a in enumerate(args) if a == c)) for c in here)
            occ.append((ctx, pred, args, groups))
    prefix = _prefix(rigid)

    def leaf(colors):
        order = sorted(colors, key=colors.get)
        mapping = {c: f"{prefix}{i}" for i, c in enumerate(order)}
        renamed = config.rename(mapping)
        if multiset:
            renamed = GlobalConfig(
                renamed.states, renamed.prev_msgs, tuple((e, tuple(sorted(c))) for e, c in renamed.channels)
            )
        return _config_key(renamed), renamed

    def search(colors):
        cells: dict[int, list[str]] = {}
        for c, col in colors.items():
            cells.setdefault(col, []).append(c)
        split = next((cells[col] for col in sorted(cells) if len(cells[col]) > 1), None)
        if split is None:
            return leaf(colors)
        best = None
        target = colors[split[0]]
        for c in split:
            ind = {x: (col * 2 + (1 if (col == target and x != c) else 0)) for x, col in colors.items()}
            cand = search(_refine(ind, occ))
            if best is None or cand[0] < best[0]:
                best = cand
        return best

    return search(_refine({c: 0 for c in free}, occ))[1]


# -- generic breadth-first exploration ------------------------------------------


def explore(
    initial,
    expand: Callable[[Any], list],
    is_goal: Callable[[Any], bool],
    key: Callable[[Any], Hashable],
    budget: Budget,
    size: Callable[[Any], int],
    goal_kind: str = TERMINATES,
    threads: int = 1,
    observer: Optional[Callable[[Any], None]] = None,
) -> Verdict:
    """Level-synchronous BFS with deterministic successor order.

    ``expand`` returns ``(label, state)`` pairs already sorted. Each canonical
    key is visited once, through the first (shortest, lexicographically least)
    path that reaches it; witnesses are independent of ``threads``.
    """
    parents: dict[Hashable, tuple[Optional[Hashable], Any]] = {}
    cap_hit = False
    truncated = False

    def witness(k):
        labels = []
        while True:
            parent, label = parents[k]
            if parent is None:
                return labels[::-1]
            labels.append(label)
            k = parent

    k0 = key(initial)
    parents[k0] = (None, None)
    if observer:
        observer(initial)
    if is_goal(initial):
        return Verdict(goal_kind, [], 1, 1, final=initial)
    frontier = [(k0, initial)]
    peak = 1
    depth = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while frontier:
            if budget.max_depth is not None and depth >= budget.max_depth:
                truncated = True
                break
            if pool is not None:
                expansions = pool.map(expand, [s for _, s in frontier])
            else:
                expansions = (expand(s) for _, s in frontier)
            nxt = []
            for (pk, _), succs in zip(frontier, expansions):
                for label, state in succs:
                    if budget.max_channel is not None and size(state) > budget.max_channel:
                        cap_hit = True
                        continue
                    k = key(state)
                    if k in parents:
                        continue
                    if budget.max_configs is not None and len(parents) >= budget.max_configs:
                        truncated = True
                        break
                    parents[k] = (pk, label)
                    if observer:
                        observer(state)
                    if is_goal(state):
                        return Verdict(goal_kind, witness(k), len(parents), max(peak, len(nxt) + 1), cap_hit, final=state)
                    nxt.append((k, state))
                if truncated:
                    break
            if truncated:
                break
            frontier = nxt
            peak = max(peak, len(frontier))
            depth += 1
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    kind = UNKNOWN if (truncated or cap_hit) else NOT_REACHABLE
    return Verdict(kind, None, len(parents), peak, cap_hit)


def check_sometimes_termination(
    scenario: Scenario,
    budget: Budget = Budget(),
    threads: int = 1,
    observer: Optional[Callable[[GlobalConfig], None]] = None,
    canonical: bool = True,
) -> Verdict:
    """Search for a run reaching a configuration with every channel empty.

    Under the autonomous policy one terminating run for any pool input
    suffices; under the interactive policy inputs are chosen per step.
    """
    eng = engine(scenario)
    rigid = scenario.rigid_constants()
    multiset = scenario.channel_kind == MULTISET
    initial = eng.initial_config()
    # rules never invent constants, so from an all-rigid start every
    # reachable config is all-rigid and canonicalization is the identity
    if canonical and not initial.constants() <= rigid:
        key = lambda c: canonicalize(c, rigid, multiset)  # noqa: E731
    else:
        key = lambda c: c  # noqa: E731
    fixed = range(len(scenario.input_pool)) if scenario.policy == AUTONOMOUS else [None]
    verdicts = []
    for fi in fixed:
        v = explore(
            initial,
            lambda c, fi=fi: eng.successors(c, fi),
            is_terminated,
            key,
            budget,
            GlobalConfig.max_channel,
            TERMINATES,
            threads,
            observer,
        )
        v.fixed_input = fi
        if v.kind == TERMINATES:
            if len(verdicts):
                v.configs_explored += sum(x.configs_explored for x in verdicts)
            return v
        verdicts.append(v)
    kind = NOT_REACHABLE if all(v.kind == NOT_REACHABLE for v in verdicts) else UNKNOWN
    return Verdict(
        kind,
        None,
        sum(v.configs_explored for v in verdicts),
        max(v.frontier_peak for v in verdicts),
        any(v.cap_hit for v in verdicts),
    )
