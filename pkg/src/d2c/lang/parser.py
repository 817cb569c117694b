"""Tokenizer and recursive-descent parser for the D2C rule language.

Grammar::

    program     := { rule } ;
    rule        := atom "if" [ body ] [ [","] "prev" body ] [ "," constraints ] "." ;
    body        := literal { "," literal } ;
    literal     := [ "not" ] atom | choiceatom ;
    atom        := ident [ "(" term { "," term } ")" ] [ "@" term ] ;
    choiceatom  := "choice" "(" [ "(" varlist ")" "," ] varlist ")" ;
    constraints := term "!=" term { "," term "!=" term } ;

An empty current-step body is accepted (``path(X,Y,Z) if prev path(X,Y,Z).``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from ..errors import ParseError, SignatureError
from .syntax import (
    NEIGHBOR_ALIAS,
    RESERVED_STATE,
    RESERVED_TRANSPORT,
    Atom,
    Choice,
    Const,
    Constraint,
    Kind,
    Literal,
    Program,
    Rule,
    Term,
    Var,
)

KEYWORDS = {"if", "prev", "not", "choice"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<neq>!=)
  | (?P<punct>[(),.@])
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | var | int | kw | punct | neq | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError("unexpected character", line, pos - line_start + 1, text[pos])
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            if value in KEYWORDS:
                tokens.append(Token("kw", value, line, col))
            elif value[0].isupper():
                tokens.append(Token("var", value, line, col))
            else:
                tokens.append(Token("ident", value, line, col))
        elif kind in ("int", "punct", "neq"):
            tokens.append(Token(kind, value, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col, tok.text or "<eof>")

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind not in ("punct", "kw", "neq"):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "kw", "neq")

    # grammar

    def program(self) -> list[Rule]:
        rules = []
        while self.tok.kind != "eof":
            rules.append(self.rule())
        return rules

    def rule(self) -> Rule:
        line = self.tok.line
        head = self.atom()
        self.expect("if")
        body: list[Literal] = []
        prev_body: list[Literal] = []
        constraints: list[Constraint] = []
        choices: list[tuple[Choice, Token]] = []
        in_prev = False
        expect_item = False
        while True:
            if self.at("."):
                if expect_item:
                    raise self.error("expected a body literal or constraint")
                self.advance()
                break
            if self.at("prev"):
                if in_prev:
                    raise self.error("at most one 'prev' marker per rule")
                in_prev = True
                self.advance()
                expect_item = True
                continue
            if (body or prev_body or constraints or choices) and not expect_item:
                raise self.error("expected ',' or '.'")
            self.item(in_prev, body, prev_body, constraints, choices)
            expect_item = False
            if self.at(","):
                self.advance()
                expect_item = True
                # a comma may precede 'prev'
                if self.at("prev"):
                    continue
        if len(choices) > 1:
            raise self.error("at most one choice predicate per rule", choices[1][1])
        choice = choices[0][0] if choices else None
        return Rule(
            head=head,
            body=tuple(body),
            prev_body=tuple(prev_body),
            constraints=tuple(constraints),
            choice=choice,
            line=line,
        )

    def item(self, in_prev, body, prev_body, constraints, choices) -> None:
        tok = self.tok
        if tok.kind == "kw" and tok.text == "choice":
            choices.append((self.choice(), tok))
            return
        if tok.kind in ("var", "int") or (tok.kind == "ident" and self.peek().kind == "neq"):
            left = self.term()
            self.expect("!=")
            constraints.append(Constraint(left, self.term()))
            return
        positive = True
        if tok.kind == "kw" and tok.text == "not":
            self.advance()
            positive = False
        lit = Literal(self.atom(), positive, in_prev)
        (prev_body if in_prev else body).append(lit)

    def atom(self) -> Atom:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error("expected a predicate name")
        self.advance()
        args: list[Term] = []
        if self.at("("):
            self.advance()
            args.append(self.term())
            while self.at(","):
                self.advance()
                args.append(self.term())
            if not self.at(")"):
                raise self.error("unclosed argument list, expected ')'")
            self.advance()
        label = None
        if self.at("@"):
            self.advance()
            label = self.term()
        return Atom(tok.text, tuple(args), label)

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "var":
            self.advance()
            return Var(tok.text)
        if tok.kind in ("ident", "int"):
            self.advance()
            return Const(tok.text)
        raise self.error("expected a term")

    def varlist(self) -> list[Var]:
        out = []
        while True:
            if self.tok.kind != "var":
                raise self.error("choice arguments must be variables")
            out.append(Var(self.advance().text))
            if not self.at(","):
                return out
            if self.peek().kind != "var":
                return out
            self.advance()

    def choice(self) -> Choice:
        self.expect("choice")
        self.expect("(")
        domain: list[Var] = []
        if self.at("("):
            self.advance()
            domain = self.varlist()
            self.expect(")")
            self.expect(",")
        rng = self.varlist()
        self.expect(")")
        return Choice(tuple(domain), tuple(rng))


Signatures = Mapping[str, Iterable]


def _parse_sig_entry(entry) -> tuple[str, int]:
    if isinstance(entry, str):
        name, _, arity = entry.partition("/")
        if not arity:
            raise SignatureError(f"signature entry {entry!r} lacks an arity")
        return name.strip(), int(arity)
    name, arity = entry
    return str(name), int(arity)


def _rename_alias(atom: Atom) -> Atom:
    if atom.pred == NEIGHBOR_ALIAS and atom.arity == 1:
        return Atom("my_neighbor", atom.args, atom.label, atom.kind)
    return atom


def _each_atom(rules: Iterable[Rule]):
    for r in rules:
        yield r.head, "head", False
        for lit in r.body:
            yield lit.atom, "body", False
        for lit in r.prev_body:
            yield lit.atom, "body", True


def resolve_signatures(rules: list[Rule], signatures: Optional[Signatures] = None) -> Program:
    """Assign a kind to every atom, using declarations first and inference as fallback."""
    declared: dict[str, tuple[Kind, int]] = {}
    for name, arity in RESERVED_STATE.items():
        declared[name] = (Kind.STATE, arity)
    for name, arity in RESERVED_TRANSPORT.items():
        declared[name] = (Kind.TRANSPORT, arity)
    for key, kind in (("input", Kind.INPUT), ("transport", Kind.TRANSPORT), ("state", Kind.STATE)):
        for entry in (signatures or {}).get(key, ()) or ():
            name, arity = _parse_sig_entry(entry)
            if name == NEIGHBOR_ALIAS and arity == 1:
                name = "my_neighbor"
            if name in declared and declared[name] != (kind, arity):
                old_kind, old_arity = declared[name]
                raise SignatureError(
                    f"predicate {name} declared as {old_kind.value}/{old_arity} "
                    f"and {kind.value}/{arity}"
                )
            declared[name] = (kind, arity)

    rules = [
        Rule(
            _rename_alias(r.head),
            tuple(Literal(_rename_alias(l.atom), l.positive, l.prev) for l in r.body),
            tuple(Literal(_rename_alias(l.atom), l.positive, l.prev) for l in r.prev_body),
            r.constraints,
            r.choice,
            r.line,
        )
        for r in rules
    ]

    arities: dict[str, int] = {}
    labeled: set[str] = set()
    stateish: set[str] = set()
    for atom, where, prev in _each_atom(rules):
        if atom.pred in arities and arities[atom.pred] != atom.arity:
            raise SignatureError(
                f"predicate {atom.pred} used with arities {arities[atom.pred]} and {atom.arity}"
            )
        arities[atom.pred] = atom.arity
        if atom.label is not None:
            labeled.add(atom.pred)
        elif where == "head" or prev:
            stateish.add(atom.pred)

    kinds: dict[str, Kind] = {}
    for pred, arity in arities.items():
        if pred in declared:
            kind, d_arity = declared[pred]
            if d_arity != arity:
                raise SignatureError(f"predicate {pred} declared with arity {d_arity}, used with {arity}")
        elif pred in labeled:
            kind = Kind.TRANSPORT
        elif pred in stateish:
            kind = Kind.STATE
        else:
            kind = Kind.INPUT
        kinds[pred] = kind

    for atom, _, _ in _each_atom(rules):
        kind = kinds[atom.pred]
        if kind is Kind.TRANSPORT and atom.label is None:
            raise SignatureError(f"transport atom {atom} must carry an @label")
        if kind is not Kind.TRANSPORT and atom.label is not None:
            raise SignatureError(f"{kind.value} atom {atom} cannot carry an @label")

    def typed(atom: Atom) -> Atom:
        return Atom(atom.pred, atom.args, atom.label, kinds[atom.pred])

    typed_rules = tuple(
        Rule(
            typed(r.head),
            tuple(Literal(typed(l.atom), l.positive, l.prev) for l in r.body),
            tuple(Literal(typed(l.atom), l.positive, l.prev) for l in r.prev_body),
            r.constraints,
            r.choice,
            r.line,
        )
        for r in rules
    )
    sigs: dict[Kind, set[tuple[str, int]]] = {k: set() for k in Kind}
    for name, (kind, arity) in declared.items():
        sigs[kind].add((name, arity))
    for pred, kind in kinds.items():
        sigs[kind].add((pred, arities[pred]))
    return Program(
        typed_rules,
        frozenset(sigs[Kind.INPUT]),
        frozenset(sigs[Kind.TRANSPORT]),
        frozenset(sigs[Kind.STATE]),
    )


def parse_rules(text: str) -> list[Rule]:
    return _Parser(text).program()


def parse_program(text: str, signatures: Optional[Signatures] = None) -> Program:
    """Parse D2C source text into a :class:`Program` with every atom kind resolved."""
    return resolve_signatures(parse_rules(text), signatures)


def parse_facts(text: str) -> frozenset[tuple[str, tuple[str, ...]]]:
    """Parse a sequence of ground facts, each terminated by ``.``."""
    p = _Parser(text)
    facts = set()
    while p.tok.kind != "eof":
        atom = p.atom()
        if atom.label is not None:
            raise p.error("facts cannot carry labels")
        for t in atom.args:
            if isinstance(t, Var):
                raise p.error(f"fact {atom} is not ground")
        p.expect(".")
        pred = "my_neighbor" if (atom.pred == NEIGHBOR_ALIAS and atom.arity == 1) else atom.pred
        facts.add((pred, tuple(t.name for t in atom.args)))
    return frozenset(facts)


def format_fact(fact) -> str:
    pred, args = fact
    return f"{pred}({','.join(args)})" if args else pred
