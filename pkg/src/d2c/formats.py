"""Scenario, trace and verdict file formats (YAML scenarios, JSON traces)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .drts import CLOSED, GlobalConfig, Network, Scenario, Trace, Transition
from .errors import ScenarioError
from .evaluator import Message
from .lang.parser import format_fact, parse_facts, parse_program

PathLike = Union[str, Path]


def _facts(value) -> frozenset:
    if value is None:
        return frozenset()
    if isinstance(value, str):
        return parse_facts(value)
    out = set()
    for item in value:
        out |= parse_facts(item if item.rstrip().endswith(".") else item + ".")
    return frozenset(out)


def scenario_from_dict(
    data: dict, base_dir: Optional[Path] = None, name: str = "", validate: bool = True
) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must be a mapping")
    unknown = set(data) - {"network", "signatures", "channel", "policy", "init", "inputs", "program", "name"}
    if unknown:
        raise ScenarioError(f"unknown scenario sections: {', '.join(sorted(unknown))}")
    net = data.get("network") or {}
    nodes = net.get("nodes") or []
    if not nodes:
        raise ScenarioError("network.nodes is empty")
    network = Network.of([str(n) for n in nodes], [[str(a) for a in e] for e in net.get("edges") or []])

    prog = data.get("program", "")
    if isinstance(prog, dict):
        if "file" not in prog:
            raise ScenarioError("program mapping needs a 'file' key")
        path = Path(prog["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        text = path.read_text(encoding="utf-8")
    else:
        text = prog or ""
    program = parse_program(text, data.get("signatures") or {})

    policy = data.get("policy", CLOSED)
    inputs = data.get("inputs") or []
    pool = tuple(_facts(db) for db in inputs) or (frozenset(),)
    scenario = Scenario(
        program=program,
        network=network,
        init=_facts(data.get("init")),
        channel_kind=data.get("channel", "queue"),
        policy=policy,
        input_pool=pool,
        name=str(data.get("name", name)),
    )
    if validate:
        scenario.validate()
    return scenario


def loads_scenario(
    text: str, base_dir: Optional[Path] = None, name: str = "", validate: bool = True
) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from None
    return scenario_from_dict(data or {}, base_dir, name, validate)


def load_scenario(path: PathLike, validate: bool = True) -> Scenario:
    path = Path(path)
    return loads_scenario(path.read_text(encoding="utf-8"), path.parent, path.stem, validate)


def _fact_block(facts) -> str:
    return "".join(format_fact(f) + ".\n" for f in sorted(facts))


class _Literal(str):
    pass


def _literal_repr(dumper, data):
    return dumper.represent_scalar("tag:yaml.org,2002:str", data, style="|")


yaml.SafeDumper.add_representer(_Literal, _literal_repr)


def scenario_to_dict(s: Scenario) -> dict:
    p = s.program
    sig = lambda names: [f"{n}/{a}" for n, a in sorted(names)]  # noqa: E731
    data: dict[str, Any] = {}
    if s.name:
        data["name"] = s.name
    data["network"] = {
        "nodes": list(s.network.nodes),
        "edges": sorted(sorted(e) for e in s.network.edges),
    }
    data["signatures"] = {
        "input": sig(p.input_sig),
        "transport": sig(p.transport_sig),
        "state": sig(p.state_sig),
    }
    data["channel"] = s.channel_kind
    data["policy"] = s.policy
    data["init"] = _Literal(_fact_block(s.init))
    data["inputs"] = [_Literal(_fact_block(db)) for db in s.input_pool if db]
    data["program"] = _Literal(str(p))
    return data


def dumps_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)


# -- traces -------------------------------------------------------------------


def _fact_str(fact) -> str:
    return format_fact(fact)


def _parse_fact(text: str):
    (fact,) = parse_facts(text + ".")
    return fact


def transition_to_json(tr: Transition) -> dict:
    return {
        "edge": list(tr.edge),
        "consumed": _fact_str(tr.consumed),
        "input": tr.input_index,
        "outcome": tr.outcome_index,
        "emissions": [
            {"channel": list(e), "messages": [_fact_str(f) for f in msgs]} for e, msgs in tr.emissions
        ],
        "witness": [[i, list(dom), list(rng)] for i, dom, rng in tr.witness],
    }


def transition_from_json(d: dict) -> Transition:
    return Transition(
        edge=tuple(d["edge"]),
        consumed=_parse_fact(d["consumed"]),
        input_index=int(d.get("input", 0)),
        outcome_index=int(d["outcome"]),
        emissions=tuple(
            (tuple(e["channel"]), tuple(_parse_fact(m) for m in e["messages"])) for e in d.get("emissions", [])
        ),
        witness=tuple((int(i), tuple(dom), tuple(rng)) for i, dom, rng in d.get("witness", [])),
    )


def config_to_json(c: GlobalConfig) -> dict:
    return {
        "states": {n: [_fact_str(f) for f in sorted(facts)] for n, facts in c.states},
        "prev": {n: (None if m is None else str(m)) for n, m in c.prev_msgs},
        "channels": {f"{s}->{d}": [_fact_str(f) for f in content] for (s, d), content in c.channels},
    }


def trace_to_json(trace: Trace, include_configs: bool = True) -> dict:
    out: dict[str, Any] = {
        "format": "d2c-trace/1",
        "fixed_input": trace.fixed_input,
        "transitions": [transition_to_json(t) for t in trace.transitions],
    }
    if include_configs:
        out["configs"] = [config_to_json(c) for c in trace.configs]
    return out


def transitions_from_trace_json(data: dict) -> tuple[list[Transition], Optional[int]]:
    if data.get("format") != "d2c-trace/1":
        raise ScenarioError("not a d2c trace file")
    return [transition_from_json(t) for t in data["transitions"]], data.get("fixed_input")


def dump_json(data, path: Optional[PathLike] = None) -> str:
    text = json.dumps(data, indent=2, sort_keys=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def message_from_str(text: str) -> Message:
    body, _, label = text.rpartition("@")
    return Message(_parse_fact(body), label)


# -- CFSM files ----------------------------------------------------------------


def cfsm_from_dict(data: dict):
    from .cfsm import READ, WRITE, Cfsm, CfsmTransition, NodeMachine

    if not isinstance(data, dict):
        raise ScenarioError("CFSM file must be a mapping")
    unknown = set(data) - {"channel", "network", "alphabet", "machines", "initial_channels", "name"}
    if unknown:
        raise ScenarioError(f"unknown CFSM sections: {', '.join(sorted(unknown))}")
    try:
        net = data["network"]
        network = Network.of([str(n) for n in net["nodes"]], [[str(a) for a in e] for e in net.get("edges") or []])
        machines, targets = {}, {}
        for node, entry in (data.get("machines") or {}).items():
            trans = []
            for row in entry.get("transitions") or []:
                src, action, a, b, msg, dst = (str(x) for x in row)
                if action not in (READ, WRITE):
                    raise ScenarioError(f"unknown action {action!r}")
                trans.append(CfsmTransition(src, action, (a, b), msg, dst))
            machines[str(node)] = NodeMachine(
                states=frozenset(str(q) for q in entry["states"]),
                initial=str(entry["initial"]),
                transitions=tuple(sorted(trans)),
                auxiliary=frozenset(str(q) for q in entry.get("auxiliary") or []),
            )
            targets[str(node)] = frozenset(str(q) for q in entry.get("targets") or [])
        initial = {
            tuple(str(x) for x in item["channel"]): tuple(str(m) for m in item.get("messages") or [])
            for item in data.get("initial_channels") or []
        }
        cfsm = Cfsm(network, frozenset(str(m) for m in data.get("alphabet") or []), machines, initial,
                    data.get("channel", "queue"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed CFSM file: {exc}") from None
    cfsm.validate()
    return cfsm, targets


def load_cfsm(path: PathLike):
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed CFSM file: {exc}") from None
    return cfsm_from_dict(data or {})


def cfsm_to_dict(cfsm, targets) -> dict:
    data: dict[str, Any] = {
        "channel": cfsm.channel_kind,
        "network": {
            "nodes": list(cfsm.network.nodes),
            "edges": sorted(sorted(e) for e in cfsm.network.edges),
        },
        "alphabet": sorted(cfsm.alphabet),
        "machines": {},
    }
    for node in cfsm.network.nodes:
        m = cfsm.machines[node]
        data["machines"][node] = {
            "initial": m.initial,
            "states": sorted(m.states, key=_natural),
            "auxiliary": sorted(m.auxiliary, key=_natural),
            "targets": sorted(targets.get(node, ()), key=_natural),
            "transitions": [[t.src, t.action, t.channel[0], t.channel[1], t.message, t.dst] for t in m.transitions],
        }
    if any(cfsm.initial_channels.values()):
        data["initial_channels"] = [
            {"channel": list(e), "messages": list(msgs)} for e, msgs in sorted(cfsm.initial_channels.items()) if msgs
        ]
    return data


def _natural(name: str):
    head = name.rstrip("0123456789")
    tail = name[len(head):]
    return (head, int(tail) if tail else -1, name)


def dumps_cfsm(cfsm, targets) -> str:
    return yaml.safe_dump(cfsm_to_dict(cfsm, targets), sort_keys=False, default_flow_style=None)
