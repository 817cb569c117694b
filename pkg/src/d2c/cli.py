"""Command-line entry point: ``d2c <command> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import cfsm as cfsm_mod
from .drts import MULTISET, QUEUE, replay, run
from .errors import D2CError
from .formats import (
    dump_json,
    dumps_cfsm,
    dumps_scenario,
    load_cfsm,
    load_scenario,
    trace_to_json,
    transitions_from_trace_json,
)
from .lang.validate import diagnose
from .termcheck import NOT_REACHABLE, UNKNOWN, Budget, Verdict, check_sometimes_termination

EXIT_OK, EXIT_NEGATIVE, EXIT_UNKNOWN, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 64, 65


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Style:
    def __init__(self, stream):
        self.on = os.environ.get("D2C_COLOR", "1") != "0" and hasattr(stream, "isatty") and stream.isatty()

    def __call__(self, text: str, code: str) -> str:
        return f"\033[{code}m{text}\033[0m" if self.on else text

    def verdict(self, kind: str) -> str:
        code = {NOT_REACHABLE: "31", UNKNOWN: "33"}.get(kind, "32")
        return self(kind, "1;" + code)


def _verdict_exit(v: Verdict) -> int:
    if v.positive:
        return EXIT_OK
    return EXIT_NEGATIVE if v.kind == NOT_REACHABLE else EXIT_UNKNOWN


def _budget(args) -> Budget:
    return Budget(args.max_configs, args.max_channel, args.max_depth)


def _emit(out, text: str) -> None:
    out.write(text if text.endswith("\n") else text + "\n")


# -- commands -----------------------------------------------------------------


def cmd_check(args, out, style) -> int:
    scenario = load_scenario(args.scenario, validate=False)
    problems = diagnose(scenario.program)
    if not problems:
        try:
            scenario.validate()
        except D2CError as exc:
            problems.append(exc)
    if args.format == "records":
        _emit(out, json.dumps({"file": str(args.scenario), "ok": not problems,
                               "errors": [{"kind": type(p).__name__, "message": str(p)} for p in problems]}))
    else:
        for p in problems:
            _emit(out, f"{args.scenario}: {style(type(p).__name__, '1;31')}: {p}")
        if not problems:
            rules, nodes = len(scenario.program.rules), len(scenario.network.nodes)
            counts = f"{rules} rule{'s' * (rules != 1)}, {nodes} node{'s' * (nodes != 1)}"
            _emit(out, f"{args.scenario}: {style('ok', '32')} ({counts})")
    return EXIT_INPUT if problems else EXIT_OK


def cmd_run(args, out, style) -> int:
    scenario = load_scenario(args.scenario)
    if args.replay:
        data = json.loads(Path(args.replay).read_text(encoding="utf-8"))
        transitions, fixed = transitions_from_trace_json(data)
        trace = replay(scenario, transitions, fixed)
    else:
        trace = run(scenario, args.seed, args.steps, args.input)
    data = trace_to_json(trace)
    if args.output:
        dump_json(data, args.output)
    if args.format == "records":
        _emit(out, json.dumps(data, sort_keys=False))
        return EXIT_OK
    for i, tr in enumerate(trace.transitions, 1):
        _emit(out, f"{i:4d}. {tr}")
    final = trace.final
    status = style("terminated", "32") if final.pending() == 0 else f"{final.pending()} messages pending"
    _emit(out, f"after {len(trace.transitions)} steps: {status}")
    for node, facts in final.states:
        shown = ", ".join(f"{p}({','.join(a)})" if a else p for p, a in sorted(facts)
                          if p not in ("my_name", "my_neighbor"))
        _emit(out, f"  {node}: {{{shown}}}")
    if args.output:
        _emit(out, f"trace written to {args.output}")
    return EXIT_OK


def _witness_trace(scenario, v: Verdict) -> dict:
    trace = replay(scenario, [tr for tr in v.witness], v.fixed_input)
    return trace_to_json(trace)


def cmd_verify(args, out, style) -> int:
    scenario = load_scenario(args.scenario)
    v = check_sometimes_termination(scenario, _budget(args), args.threads)
    witness_path: Optional[Path] = None
    if v.witness is not None and not args.no_witness:
        witness_path = Path(args.witness) if args.witness else Path(f"{Path(args.scenario).stem}.witness.json")
        dump_json(_witness_trace(scenario, v), witness_path)
    if args.format == "records":
        rec = v.record(lambda w: trace_to_json(replay(scenario, w, v.fixed_input), include_configs=False)["transitions"])
        _emit(out, json.dumps(rec))
        return _verdict_exit(v)
    _emit(out, f"{args.scenario}: {style.verdict(v.kind)}")
    _emit(out, f"  configs explored: {v.configs_explored}")
    _emit(out, f"  frontier peak: {v.frontier_peak}")
    if v.cap_hit:
        _emit(out, "  channel cap hit")
    if v.fixed_input is not None:
        _emit(out, f"  fixed input: #{v.fixed_input}")
    if v.witness is not None:
        _emit(out, f"  witness: {len(v.witness)} transitions")
        for i, tr in enumerate(v.witness, 1):
            _emit(out, f"  {i:4d}. {tr}")
        if witness_path is not None:
            _emit(out, f"  witness written to {witness_path}")
    return _verdict_exit(v)


def cmd_compile_to_cfsm(args, out, style) -> int:
    scenario = load_scenario(args.scenario)
    machine, targets = cfsm_mod.dds_to_cfsm(scenario, args.bound, args.input)
    text = dumps_cfsm(machine, targets)
    Path(args.output).write_text(text, encoding="utf-8")
    aux = sum(len(m.auxiliary) for m in machine.machines.values())
    trans = sum(len(m.transitions) for m in machine.machines.values())
    _emit(out, f"{args.output}: {machine.state_count()} states ({aux} auxiliary), {trans} transitions")
    return EXIT_OK


def cmd_compile_to_dds(args, out, style) -> int:
    machine, targets = load_cfsm(args.cfsm)
    scenario = cfsm_mod.cfsm_to_dds(machine, targets)
    Path(args.output).write_text(dumps_scenario(scenario), encoding="utf-8")
    _emit(out, f"{args.output}: {len(scenario.network.nodes)} nodes, {len(scenario.program.rules)} rules")
    return EXIT_OK


def cmd_cfsm_reach(args, out, style) -> int:
    machine, targets = load_cfsm(args.cfsm)
    v = cfsm_mod.cfsm_reach(machine, targets, args.channel, _budget(args), args.threads)
    if args.format == "records":
        rec = v.record(lambda w: [{"node": n, "transition": str(t)} for n, t in w])
        _emit(out, json.dumps(rec))
        return _verdict_exit(v)
    _emit(out, f"{args.cfsm}: {style.verdict(v.kind)}")
    _emit(out, f"  configs explored: {v.configs_explored}")
    _emit(out, f"  frontier peak: {v.frontier_peak}")
    if v.cap_hit:
        _emit(out, "  channel cap hit")
    if v.witness is not None:
        _emit(out, f"  witness: {len(v.witness)} transitions")
        for i, (node, t) in enumerate(v.witness, 1):
            _emit(out, f"  {i:4d}. {node}: {t}")
    return _verdict_exit(v)


# -- argument parsing -----------------------------------------------------------


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _natural(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-configs", type=_positive, default=100_000, help="configuration budget (default 100000)")
    p.add_argument("--max-channel", type=_positive, default=None, help="prune configs with a longer channel")
    p.add_argument("--max-depth", type=_positive, default=None, help="stop after this many BFS levels")
    p.add_argument("--threads", type=_positive, default=1, help="worker threads; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="d2c", description="Simulate and verify declarative distributed systems.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "records"), default="text", help="report format")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", parents=[common], help="static diagnostics for a scenario")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", parents=[common], help="pseudorandom run, printed and optionally saved")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=_natural, default=100)
    p.add_argument("--input", type=_natural, default=None, help="fixed input index (autonomous policy)")
    p.add_argument("--replay", metavar="TRACE", help="replay the transitions of a saved trace")
    p.add_argument("-o", "--output", metavar="FILE", help="write the trace as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", parents=[common], help="sometimes-termination check")
    p.add_argument("scenario")
    _search_flags(p)
    p.add_argument("--witness", metavar="FILE", help="witness trace path (default <scenario>.witness.json)")
    p.add_argument("--no-witness", action="store_true", help="do not write a witness file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compile-to-cfsm", parents=[common], help="compile a propositional lazy-bounded scenario")
    p.add_argument("scenario")
    p.add_argument("--bound", type=_natural, required=True)
    p.add_argument("--input", type=_natural, default=None, help="fixed input index (autonomous policy)")
    p.add_argument("-o", "--output", required=True, metavar="FILE")
    p.set_defaults(func=cmd_compile_to_cfsm)

    p = sub.add_parser("compile-to-dds", parents=[common], help="encode a single-node CFSM as a scenario")
    p.add_argument("cfsm")
    p.add_argument("-o", "--output", required=True, metavar="FILE")
    p.set_defaults(func=cmd_compile_to_dds)

    p = sub.add_parser("cfsm-reach", parents=[common], help="empty-channel target reachability for a CFSM")
    p.add_argument("cfsm")
    p.add_argument("--channel", choices=(QUEUE, MULTISET), default=None)
    _search_flags(p)
    p.set_defaults(func=cmd_cfsm_reach)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    style = _Style(out)
    try:
        return args.func(args, out, style)
    except (D2CError, OSError, ValueError, yaml.YAMLError, json.JSONDecodeError) as exc:
        err.write(f"d2c: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
