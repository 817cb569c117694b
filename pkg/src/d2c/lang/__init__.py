"""D2C front-end: syntax tree, parser and static validation."""

from .parser import format_fact, parse_facts, parse_program, parse_rules, tokenize
from .syntax import Atom, Choice, Const, Constraint, Kind, Literal, Program, Rule, Var, pretty
from .validate import (
    Stratification,
    check_plb,
    check_rule,
    check_safety,
    diagnose,
    stratify,
    validate,
)

__all__ = [
    "Atom",
    "Choice",
    "Const",
    "Constraint",
    "Kind",
    "Literal",
    "Program",
    "Rule",
    "Stratification",
    "Var",
    "check_plb",
    "check_rule",
    "check_safety",
    "diagnose",
    "format_fact",
    "parse_facts",
    "parse_program",
    "parse_rules",
    "pretty",
    "stratify",
    "tokenize",
    "validate",
]
