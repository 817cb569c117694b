from __future__ import annotations

import random
from collections import deque
from pathlib import Path

import pytest

import d2c
from d2c.formats import scenario_from_dict

CORPUS = Path(d2c.__file__).parent / "corpus"
DIRECTIONS = ("down", "left", "right", "up")


def maze_reachable(edges, start, goal) -> bool:
    """Is ``goal`` reached by a walk of length >= 1 from ``start``? Plain BFS."""
    succ: dict[str, set] = {}
    for a, b, _ in edges:
        succ.setdefault(a, set()).add(b)
    seen, todo = set(), deque(succ.get(start, ()))
    while todo:
        x = todo.popleft()
        if x in seen:
            continue
        seen.add(x)
        todo.extend(succ.get(x, ()))
    return goal in seen


def random_maze(rng: random.Random, n_positions: int, density: float = 0.35):
    """Positions p0..p(n-1); at most one outgoing path per direction."""
    pos = [f"p{i}" for i in range(n_positions)]
    edges = []
    for a in pos:
        dirs = [d for d in DIRECTIONS if rng.random() < density]
        for d in dirs:
            edges.append((a, rng.choice([b for b in pos if b != a]), d))
    start = pos[0]
    goal = rng.choice(pos[1:])
    return edges, start, goal


def maze_facts(edges, start, goal, cards=()) -> str:
    lines = [f"path({a},{b},{d})." for a, b, d in edges]
    lines += [f"card({x},{y})." for x, y in cards]
    lines += [f"exit({goal}).", f"player({start})."]
    return "\n".join(lines) + "\n"


def maze_scenario(edges, start, goal, name="maze"):
    return scenario_from_dict(
        {
            "name": name,
            "network": {"nodes": ["n"], "edges": []},
            "signatures": {"transport": ["start/0", "wakeUp/0"], "state": ["path/3", "exit/1", "player/1", "win/0"]},
            "channel": "queue",
            "policy": "closed",
            "init": maze_facts(edges, start, goal),
            "program": {"file": "maze.d2c"},
        },
        CORPUS,
    )


def cards_scenario(edges, start, goal, cards, name="cards"):
    return scenario_from_dict(
        {
            "name": name,
            "network": {"nodes": ["n"], "edges": []},
            "signatures": {
                "transport": ["start/0", "up/0", "down/0", "left/0", "right/0", "none/0"],
                "state": ["path/3", "exit/1", "player/1", "win/0", "card/2", "collect/1", "blocked/1"],
            },
            "channel": "multiset",
            "policy": "closed",
            "init": maze_facts(edges, start, goal, cards),
            "program": {"file": "cards.d2c"},
        },
        CORPUS,
    )


@pytest.fixture
def corpus() -> Path:
    return CORPUS


GOSSIP = """
know(X) if prev know(X).
know(X) if tell(X)@Y.
tell(X)@Y if tell(X)@Z, my_neighbor(Y), Y != Z, prev not know(X).
tell(X)@Y if start@Z, my_neighbor(Y), know(X).
"""


def gossip_scenario(nodes, edges, kind="queue", init="know(r0).", name="gossip"):
    return scenario_from_dict(
        {
            "name": name,
            "network": {"nodes": list(nodes), "edges": [list(e) for e in edges]},
            "signatures": {"transport": ["tell/1"], "state": ["know/1"]},
            "channel": kind,
            "program": GOSSIP,
            "init": init,
        }
    )


def random_network(rng: random.Random, max_nodes=3):
    nodes = [f"n{i}" for i in range(rng.randint(1, max_nodes))]
    edges = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :] if rng.random() < 0.7]
    return nodes, edges


def with_fresh_constants(rng: random.Random, config, fresh, kind):
    """Sprinkle non-rigid constants into node states and channels."""
    from d2c.drts import GlobalConfig, normalize_channels

    states = []
    for node, facts in config.states:
        extra = {("know", (c,)) for c in fresh if rng.random() < 0.5}
        states.append((node, facts | extra))
    chans = []
    for e, content in config.channels:
        extra = tuple(("tell", (c,)) for c in fresh if rng.random() < 0.3)
        chans.append((e, tuple(content) + extra))
    return normalize_channels(GlobalConfig(tuple(states), config.prev_msgs, tuple(chans)), kind)


def random_plb(rng: random.Random):
    """Propositional messages, consumable tokens, echo loops; 1-2 nodes, at most 6 initial facts."""
    nodes = ["n0"] if rng.random() < 0.5 else ["n0", "n1"]
    edges = [["n0", "n1"]] if len(nodes) == 2 else []
    consts = ["c0", "c1", "c2"]
    pool = [f"tok({c})" for c in consts] + [f"home({n})" for n in nodes] + ["done"]
    init = rng.sample(pool, rng.randint(0, min(6, len(pool))))

    def trigger():
        return rng.choice(["start@Z", "m0@Z", "m0@Z", "m1@Z", "m1@Z"])

    def recipient():
        return rng.choice(["my_name(Y)", "my_neighbor(Y)"])

    def guard():
        return rng.choice(["", " prev not done", f" prev tok({rng.choice(consts)})", " prev home(Y)", " prev not home(Y)"])

    rules = ["tok(X) if not take(X) prev tok(X).", "home(X) if prev home(X).", "done if prev done."]
    rules.append(f"m0@Y if start@Z, {recipient()}{guard()}.")
    for _ in range(rng.randint(2, 5)):
        kind = rng.choice(["take", "send", "echo", "echo", "relay", "done"])
        m = rng.choice(["m0", "m1"])
        if kind == "take":
            rules.append(f"take(X) if {trigger()}, choice(X) prev tok(X).")
        elif kind == "send":
            rules.append(f"{m}@Y if {trigger()}, {recipient()}{guard()}.")
        elif kind == "echo":
            rules.append(f"{m}@Y if {m}@Z, my_name(Y){guard()}.")
        elif kind == "relay":
            rules.append(f"{m}@Y if take(X), {recipient()}{guard()}.")
        else:
            rules.append(f"done if {trigger()}.")
    return scenario_from_dict(
        {
            "network": {"nodes": nodes, "edges": edges},
            "signatures": {
                "transport": ["start/0", "m0/0", "m1/0"],
                "state": ["tok/1", "take/1", "home/1", "done/0"],
            },
            "channel": rng.choice(["queue", "multiset"]),
            "init": "".join(f + ". " for f in init),
            "program": "\n".join(rules),
        }
    )
