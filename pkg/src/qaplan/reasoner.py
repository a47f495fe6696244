"""Bottom-up evaluation of positive Horn rules with comparison guards.

Rules are read from a small subset of clingo syntax::

    goal(X, profit_loss_report) :- _goal(X, goal_1, _).
    error("end date must be after start date") :- start_date(X, D1, date),
        end_date(X, D2, date), false == @lte_dates(D1, D2).

``materialize`` computes the least fixpoint with semi-naive iteration; the
naive strategy is kept for cross-checking.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

from .asp import (
    PREDICATE_RE,
    SYMBOL_RE,
    Atom,
    AspSyntaxError,
    FactSet,
    String,
    Symbol,
    TokenStream,
    TupleTerm,
    tokenize,
)


class RuleError(ValueError):
    pass


class SafetyError(RuleError):
    pass


class UnknownBuiltin(RuleError):
    pass


class BuiltinDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Wildcard:
    def __str__(self) -> str:
        return "_"


WILDCARD = Wildcard()


@dataclass(frozen=True)
class AtomPattern:
    predicate: str
    terms: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.terms)

    def __str__(self) -> str:
        return str(Atom.__str__(self))  # same surface syntax as ground atoms


@dataclass(frozen=True)
class BuiltinCall:
    name: str
    args: tuple

    def __str__(self) -> str:
        return f"@{self.name}(" + ", ".join(str(a) for a in self.args) + ")"


@dataclass(frozen=True)
class Guard:
    left: object
    op: str  # "==" or "!="
    right: object

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


BodyElement = Union[AtomPattern, Guard]


@dataclass(frozen=True)
class Rule:
    head: AtomPattern
    body: tuple = ()

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- " + ", ".join(str(b) for b in self.body) + "."


# --- builtins ----------------------------------------------------------------

_DATE_RE = re.compile(r"(\d{2})/(\d{2})/(\d{4})\Z")


def parse_date(text: str) -> dt.date:
    """Parse a strict ``MM/DD/YYYY`` calendar date."""
    m = _DATE_RE.match(text)
    if m is None:
        raise BuiltinDomainError(f"not a MM/DD/YYYY date: {text!r}")
    month, day, year = (int(g) for g in m.groups())
    try:
        return dt.date(year, month, day)
    except ValueError as exc:
        raise BuiltinDomainError(f"invalid calendar date {text!r}: {exc}") from None


def lte_dates(d1, d2) -> Symbol:
    if not isinstance(d1, String) or not isinstance(d2, String):
        raise BuiltinDomainError(f"lte_dates expects two date strings, got {d1}, {d2}")
    return Symbol("true" if parse_date(d1.value) <= parse_date(d2.value) else "false")


DEFAULT_BUILTINS: Mapping[str, Callable] = {"lte_dates": lte_dates}


# --- parsing -----------------------------------------------------------------

def _is_var(text: str) -> bool:
    return text[0].isupper()


def _parse_pattern_term(ts: TokenStream):
    tok = ts.next()
    if tok.kind == "string":
        return String(tok.text[1:-1])
    if tok.kind == "ident":
        if tok.text == "_":
            return WILDCARD
        if _is_var(tok.text):
            return Var(tok.text)
        if SYMBOL_RE.match(tok.text):
            return Symbol(tok.text)
        ts.fail(f"invalid term {tok.text!r}", tok)
    if tok.kind == "(":
        items = [_parse_pattern_term(ts)]
        while ts.peek().kind == ",":
            ts.next()
            items.append(_parse_pattern_term(ts))
        ts.expect(")", "')'")
        return TupleTerm(tuple(items))
    ts.fail(f"expected a term, found {tok.text or 'end of input'!r}", tok)


def _parse_atom_pattern(ts: TokenStream) -> AtomPattern:
    tok = ts.expect("ident", "predicate")
    if not PREDICATE_RE.match(tok.text):
        ts.fail(f"invalid predicate name {tok.text!r}", tok)
    terms = []
    if ts.peek().kind == "(":
        ts.next()
        terms.append(_parse_pattern_term(ts))
        while ts.peek().kind == ",":
            ts.next()
            terms.append(_parse_pattern_term(ts))
        ts.expect(")", "')'")
    return AtomPattern(tok.text, tuple(terms))


def _parse_operand(ts: TokenStream, builtins: Mapping[str, Callable]):
    if ts.peek().kind == "@":
        ts.next()
        name = ts.expect("ident", "builtin name")
        if name.text not in builtins:
            raise UnknownBuiltin(f"unknown builtin @{name.text} (line {name.line}, column {name.column})")
        ts.expect("(", "'('")
        args = [_parse_operand(ts, builtins)]
        while ts.peek().kind == ",":
            ts.next()
            args.append(_parse_operand(ts, builtins))
        ts.expect(")", "')'")
        return BuiltinCall(name.text, tuple(args))
    term = _parse_pattern_term(ts)
    if term is WILDCARD:
        ts.fail("wildcard not allowed in a comparison", ts.tokens[ts.pos - 1])
    return term


def _parse_body_element(ts: TokenStream, builtins) -> BodyElement:
    tok, after = ts.peek(), ts.peek(1)
    starts_atom = (
        tok.kind == "ident" and not _is_var(tok.text) and tok.text != "_"
        and after.kind not in ("eq", "ne")
    )
    if starts_atom:
        return _parse_atom_pattern(ts)
    left = _parse_operand(ts, builtins)
    op = ts.next()
    if op.kind not in ("eq", "ne"):
        ts.fail(f"expected '==' or '!=', found {op.text or 'end of input'!r}", op)
    right = _parse_operand(ts, builtins)
    return Guard(left, op.text, right)


def _vars(term) -> set[str]:
    if isinstance(term, Var):
        return {term.name}
    if isinstance(term, TupleTerm):
        return set().union(*(_vars(t) for t in term.items))
    if isinstance(term, BuiltinCall):
        return set().union(*(_vars(a) for a in term.args))
    if isinstance(term, (AtomPattern,)):
        return set().union(set(), *(_vars(t) for t in term.terms))
    if isinstance(term, Guard):
        return _vars(term.left) | _vars(term.right)
    return set()


def _has_wildcard(term) -> bool:
    if term is WILDCARD:
        return True
    if isinstance(term, TupleTerm):
        return any(_has_wildcard(t) for t in term.items)
    return False


def check_safety(rule: Rule) -> None:
    bound: set[str] = set()
    for element in rule.body:
        if isinstance(element, AtomPattern):
            bound |= _vars(element)
        else:
            unbound = _vars(element) - bound
            if unbound:
                raise SafetyError(
                    f"guard variables {sorted(unbound)} not bound by an earlier atom in: {rule}"
                )
    if any(_has_wildcard(t) for t in rule.head.terms):
        raise SafetyError(f"wildcard in rule head: {rule}")
    unbound = _vars(rule.head) - bound
    if unbound:
        raise SafetyError(f"head variables {sorted(unbound)} not bound in body: {rule}")


def parse_rules(text: str, builtins: Mapping[str, Callable] = DEFAULT_BUILTINS) -> list[Rule]:
    ts = TokenStream(tokenize(text))
    rules = []
    while ts.peek().kind != "eof":
        head = _parse_atom_pattern(ts)
        body = []
        if ts.peek().kind == "if":
            ts.next()
            body.append(_parse_body_element(ts, builtins))
            while ts.peek().kind == ",":
                ts.next()
                body.append(_parse_body_element(ts, builtins))
        ts.expect(".", "'.'")
        rule = Rule(head, tuple(body))
        check_safety(rule)
        rules.append(rule)
    return rules


# --- evaluation --------------------------------------------------------------

def _match(pattern, value, binding: dict) -> dict | None:
    if pattern is WILDCARD:
        return binding
    if isinstance(pattern, Var):
        bound = binding.get(pattern.name)
        if bound is None:
            return {**binding, pattern.name: value}
        return binding if bound == value else None
    if isinstance(pattern, TupleTerm):
        if not isinstance(value, TupleTerm) or len(value.items) != len(pattern.items):
            return None
        for p, v in zip(pattern.items, value.items):
            binding = _match(p, v, binding)
            if binding is None:
                return None
        return binding
    return binding if pattern == value else None


def _substitute(term, binding: dict):
    if isinstance(term, Var):
        return binding[term.name]
    if isinstance(term, TupleTerm):
        return TupleTerm(tuple(_substitute(t, binding) for t in term.items))
    return term


def _evaluate(operand, binding: dict, builtins):
    if isinstance(operand, BuiltinCall):
        args = [_evaluate(a, binding, builtins) for a in operand.args]
        return builtins[operand.name](*args)
    return _substitute(operand, binding)


class _Index:
    def __init__(self, atoms: Iterable[Atom] = ()):
        self.by_key: dict[tuple, list[Atom]] = {}
        for a in atoms:
            self.by_key.setdefault((a.predicate, a.arity), []).append(a)

    def get(self, pattern: AtomPattern) -> list[Atom]:
        return self.by_key.get((pattern.predicate, pattern.arity), [])


def _fire(rule: Rule, sources: list, builtins) -> Iterable[Atom]:
    """Yield head instances; ``sources[i]`` is the index for body atom ``i``."""

    def walk(k: int, binding: dict):
        if k == len(rule.body):
            yield Atom(rule.head.predicate, tuple(_substitute(t, binding) for t in rule.head.terms))
            return
        element = rule.body[k]
        if isinstance(element, AtomPattern):
            for fact in sources[k].get(element):
                b = binding
                for p, v in zip(element.terms, fact.terms):
                    b = _match(p, v, b)
                    if b is None:
                        break
                if b is not None:
                    yield from walk(k + 1, b)
        else:
            try:
                left = _evaluate(element.left, binding, builtins)
                right = _evaluate(element.right, binding, builtins)
            except BuiltinDomainError as exc:
                shown = {name: str(value) for name, value in sorted(binding.items())}
                raise BuiltinDomainError(f"{exc} in rule `{rule}` with {shown}") from None
            if (left == right) == (element.op == "=="):
                yield from walk(k + 1, binding)

    return walk(0, {})


def materialize(
    facts: FactSet,
    rules: list[Rule],
    builtins: Mapping[str, Callable] = DEFAULT_BUILTINS,
    method: str = "seminaive",
) -> FactSet:
    """Least fixpoint of ``rules`` over ``facts``, returned as input plus derived atoms."""
    if method == "naive":
        return _naive(facts, rules, builtins)
    if method != "seminaive":
        raise ValueError(f"unknown method {method!r}")

    total = set(facts)
    old: set[Atom] = set()
    delta = set(facts)
    first = True
    while delta or first:
        idx_old, idx_delta, idx_total = _Index(old), _Index(delta), _Index(total)
        new: set[Atom] = set()
        for rule in rules:
            positions = [i for i, e in enumerate(rule.body) if isinstance(e, AtomPattern)]
            if not positions:
                if first:
                    new.update(_fire(rule, [None] * len(rule.body), builtins))
                continue
            for pos in positions:
                sources = [
                    idx_old if i < pos else idx_delta if i == pos else idx_total
                    for i in range(len(rule.body))
                ]
                new.update(_fire(rule, sources, builtins))
        new -= total
        old = set(total)
        total |= new
        delta = new
        first = False
    return FactSet(total)


def _naive(facts: FactSet, rules: list[Rule], builtins) -> FactSet:
    total = set(facts)
    while True:
        idx = _Index(total)
        new = set()
        for rule in rules:
            new.update(_fire(rule, [idx] * len(rule.body), builtins))
        if new <= total:
            return FactSet(total)
        total |= new


def extract_errors(materialized: FactSet) -> list[str]:
    messages = []
    for a in materialized.select("error", 1):
        term = a.terms[0]
        messages.append(term.value if isinstance(term, String) else str(term))
    return messages


def load_rules(path, builtins: Mapping[str, Callable] = DEFAULT_BUILTINS) -> list[Rule]:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read(), builtins)


__all__ = [
    "AspSyntaxError", "AtomPattern", "BuiltinCall", "BuiltinDomainError", "DEFAULT_BUILTINS",
    "Guard", "Rule", "RuleError", "SafetyError", "UnknownBuiltin", "Var", "WILDCARD",
    "extract_errors", "load_rules", "lte_dates", "materialize", "parse_date", "parse_rules",
]
