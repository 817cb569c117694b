import random

import pytest
from conftest import CORPUS, gossip_scenario, maze_scenario, random_network, with_fresh_constants
from hypothesis import given, settings
from hypothesis import strategies as st

from d2c.drts import (
    AUTONOMOUS,
    INTERACTIVE,
    MULTISET,
    QUEUE,
    START,
    Chan,
    GlobalConfig,
    Network,
    engine,
    initial_config,
    is_terminated,
    normalize_channels,
    replay,
    run,
    successors,
)
from d2c.errors import ScenarioError
from d2c.formats import load_scenario, scenario_from_dict

WAKE = ("wakeUp", ())


def single_node(program, channel=QUEUE, policy="closed", inputs=None, sig=None, init=""):
    data = {"network": {"nodes": ["n"]}, "program": program, "channel": channel, "policy": policy, "init": init}
    if inputs is not None:
        data["inputs"] = inputs
    if sig:
        data["signatures"] = sig
    return scenario_from_dict(data)


class TestInitialConfig:
    def test_maze(self):
        s = load_scenario(CORPUS / "maze_solvable.dds")
        c = initial_config(s)
        assert c.channels == ((("n", "n"), (START,)),)
        assert c.state("n") == s.init | {("my_name", ("n",))}
        assert c.prev_msg("n") is None

    def test_two_nodes(self):
        c = initial_config(gossip_scenario(["a", "b"], [("a", "b")], init=""))
        assert dict(c.channels) == {("a", "a"): (START,), ("a", "b"): (), ("b", "a"): (), ("b", "b"): (START,)}
        assert ("my_neighbor", ("b",)) in c.state("a")

    def test_multiset(self):
        s = load_scenario(CORPUS / "cards_solvable.dds")
        assert s.channel_kind == MULTISET
        assert initial_config(s).channel("n", "n") == (START,)


class TestSuccessors:
    def test_initial_maze_branches_per_direction(self):
        s = maze_scenario([("a", "b", "up"), ("a", "c", "down"), ("b", "a", "left")], "a", "c")
        succ = successors(s, initial_config(s))
        players = sorted(a for _, c in succ for p, a in c.state("n") if p == "player")
        assert players == [("b",), ("c",)] and len(succ) == 2
        assert all(tr.consumed == START and tr.edge == ("n", "n") for tr, _ in succ)
        assert all(c.channel("n", "n") == (WAKE,) for _, c in succ)

    def test_terminated_has_no_successors(self):
        s = load_scenario(CORPUS / "maze_solvable.dds")
        empty = GlobalConfig(initial_config(s).states, initial_config(s).prev_msgs, ((("n", "n"), ()),))
        assert is_terminated(empty)
        assert successors(s, empty) == []

    def _two_messages(self, kind):
        s = single_node("got(a) if a@X.\ngot(b) if b@X.", kind, sig={"transport": ["a/0", "b/0"]})
        c0 = initial_config(s)
        return s, GlobalConfig(c0.states, c0.prev_msgs, ((("n", "n"), (("a", ()), ("b", ()))),))

    def test_queue_consumes_head_only(self):
        s, c = self._two_messages(QUEUE)
        assert [tr.consumed for tr, _ in successors(s, c)] == [("a", ())]

    def test_multiset_consumes_any(self):
        s, c = self._two_messages(MULTISET)
        assert [tr.consumed for tr, _ in successors(s, c)] == [("a", ()), ("b", ())]

    def test_queue_emissions_enumerate_orders(self):
        s = single_node("a@X if start@X.\nb@X if start@X.", sig={"transport": ["a/0", "b/0"]})
        succ = successors(s, initial_config(s))
        assert sorted(c.channel("n", "n") for _, c in succ) == [(("a", ()), ("b", ())), (("b", ()), ("a", ()))]

    def test_interactive_inputs(self):
        s = single_node(
            "seen(X) if obs(X), start@Y.", policy=INTERACTIVE, inputs=["obs(p).", "obs(q)."], sig={"input": ["obs/1"]}
        )
        succ = successors(s, initial_config(s))
        assert sorted(tr.input_index for tr, _ in succ) == [0, 1]

    def test_autonomous_singleton_matches_interactive(self):
        prog, sig = "seen(X) if obs(X), start@Y.\nseen(X) if prev seen(X).", {"input": ["obs/1"]}
        a = single_node(prog, policy=AUTONOMOUS, inputs=["obs(p)."], sig=sig)
        i = single_node(prog, policy=INTERACTIVE, inputs=["obs(p)."], sig=sig)
        assert successors(a, initial_config(a), 0) == successors(i, initial_config(i))

    def test_closed_policy_rejects_inputs(self):
        with pytest.raises(ScenarioError):
            single_node("s if start@X.", inputs=["i(a)."], sig={"input": ["i/1"]})


class TestRuns:
    def test_zero_steps(self):
        s = load_scenario(CORPUS / "maze_solvable.dds")
        t = run(s, seed=1, max_steps=0)
        assert t.configs == [initial_config(s)] and t.transitions == []

    def test_same_seed_same_trace(self):
        s = load_scenario(CORPUS / "cards_solvable.dds")
        assert run(s, 7, 40).transitions == run(s, 7, 40).transitions

    @pytest.mark.parametrize("seed", range(10))
    def test_ends_terminated_or_at_max(self, seed):
        s = load_scenario(CORPUS / "maze_solvable.dds")
        t = run(s, seed, 25)
        assert is_terminated(t.final) or len(t.transitions) == 25

    def test_maze_terminates_after_win(self):
        s = maze_scenario([("a", "b", "up")], "a", "b")
        t = run(s, 0, 10)
        assert len(t.transitions) == 2
        assert is_terminated(t.final)
        assert ("win", ()) in t.final.state("n")

    def test_replay_reproduces_run(self):
        s = gossip_scenario(["a", "b", "c"], [("a", "b"), ("b", "c")])
        t = run(s, 3, 30)
        assert replay(s, t.transitions).configs == t.configs

    def test_replay_rejects_disabled_transition(self):
        s = load_scenario(CORPUS / "maze_solvable.dds")
        t = run(s, 0, 5)
        with pytest.raises(ScenarioError):
            replay(s, t.transitions[1:])


def _frame_holds(config, tr, nxt):
    s, d = tr.edge
    for (n, f0), (_, f1) in zip(config.states, nxt.states):
        assert n == d or f0 == f1
    for (n, m0), (_, m1) in zip(config.prev_msgs, nxt.prev_msgs):
        assert n == d or m0 == m1
    for (e, c0), (_, c1) in zip(config.channels, nxt.channels):
        assert e == (s, d) or e[0] == d or c0 == c1
    assert nxt.pending() - config.pending() == tr.emitted() - 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([QUEUE, MULTISET]))
def test_frame_and_conservation(seed, kind):
    rng = random.Random(seed)
    nodes, edges = random_network(rng)
    s = gossip_scenario(nodes, edges, kind, init=" ".join(f"know(r{i})." for i in range(rng.randint(0, 2))))
    config = run(s, seed, rng.randint(0, 6)).final
    for tr, nxt in successors(s, config):
        _frame_holds(config, tr, nxt)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_queue_runs_are_multiset_runs(seed):
    rng = random.Random(seed)
    nodes, edges = random_network(rng)
    q = gossip_scenario(nodes, edges, QUEUE)
    m = gossip_scenario(nodes, edges, MULTISET)
    t = run(q, seed, 12)
    projected = replay(m, t.transitions)
    for a, b in zip(t.configs, projected.configs):
        assert normalize_channels(a, MULTISET) == b


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([QUEUE, MULTISET]))
def test_renaming_commutes_with_successors(seed, kind):
    rng = random.Random(seed)
    nodes, edges = random_network(rng)
    s = gossip_scenario(nodes, edges, kind)
    fresh = ["f1", "f2", "f3"]
    config = with_fresh_constants(rng, run(s, seed, rng.randint(0, 4)).final, fresh, kind)
    image = rng.sample(["g1", "g2", "g3", "g4"], 3)
    rho = dict(zip(fresh, image))
    lhs = {normalize_channels(c.rename(rho), kind) for _, c in successors(s, config)}
    rhs = {c for _, c in successors(s, normalize_channels(config.rename(rho), kind))}
    assert lhs == rhs


def test_network_channels():
    net = Network.of(["b", "a", "c"], [["a", "b"], ["b", "c"]])
    assert net.channels() == [("a", "a"), ("a", "b"), ("b", "a"), ("b", "b"), ("b", "c"), ("c", "b"), ("c", "c")]
    assert net.incoming("b") == [("a", "b"), ("b", "b"), ("c", "b")]
    with pytest.raises(ScenarioError):
        Network.of(["a"], [["a", "z"]])


def test_engine_is_cached():
    s = load_scenario(CORPUS / "ping.dds")
    assert engine(s) is engine(s)


FACTS = st.tuples(st.sampled_from(["m", "n", "start"]), st.tuples(st.sampled_from(["a", "b"])) | st.just(()))


@settings(max_examples=200, deadline=None)
@given(st.lists(FACTS, max_size=12), st.lists(FACTS, max_size=3), st.lists(FACTS, max_size=3))
def test_chan_hash_is_incremental(content, extra, queue_extra):
    def scanned(c):
        return hash(Chan(tuple(c)))

    bag = Chan(tuple(sorted(content)))
    grown = bag.bag_add(extra)
    assert grown == tuple(sorted(content + extra))
    assert hash(grown) == scanned(grown)
    for fact in set(grown):
        smaller = grown.bag_remove(fact)
        expected = list(grown)
        expected.remove(fact)
        assert smaller == tuple(expected) and hash(smaller) == scanned(expected)
    q = Chan(tuple(content))
    hash(q)
    longer = q.extend(queue_extra)
    assert longer == tuple(content + queue_extra) and hash(longer) == scanned(longer)
    if longer:
        assert hash(longer.popleft()) == scanned(longer[1:])
