"""Interpreter, simulator and verification toolkit for declarative distributed systems."""

from .drts import Drts, GlobalConfig, Network, Scenario, Trace, Transition, engine, replay, run
from .evaluator import EvalContext, Message, StepOutcome, step
from .lang import parse_facts, parse_program, validate
from .termcheck import Budget, Verdict, canonicalize, check_sometimes_termination

__all__ = [
    "Budget",
    "Drts",
    "EvalContext",
    "GlobalConfig",
    "Message",
    "Network",
    "Scenario",
    "StepOutcome",
    "Trace",
    "Transition",
    "Verdict",
    "canonicalize",
    "check_sometimes_termination",
    "engine",
    "parse_facts",
    "parse_program",
    "replay",
    "run",
    "step",
    "validate",
]
__version__ = "0.1.0"
