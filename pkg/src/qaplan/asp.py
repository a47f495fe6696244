"""Ground ASP facts: terms, atoms, fact sets, and their text syntax.

The same :class:`FactSet` type carries both the intermediate representation
produced by translation (``_goal(x, goal_1).``) and the materialized
representation produced by the reasoner.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

SYMBOL_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
PREDICATE_RE = re.compile(r"_?[a-z][A-Za-z0-9_]*\Z")


class ParseError(ValueError):
    """Syntax error with a 1-based source location."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class AspSyntaxError(ParseError):
    pass


@dataclass(frozen=True)
class Symbol:
    name: str

    def __post_init__(self):
        if not SYMBOL_RE.match(self.name):
            raise ValueError(f"invalid symbol constant: {self.name!r}")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class String:
    value: str

    def __post_init__(self):
        if '"' in self.value or "\n" in self.value:
            raise ValueError(f"string may not contain quotes or newlines: {self.value!r}")

    def __str__(self) -> str:
        return f'"{self.value}"'


@dataclass(frozen=True)
class TupleTerm:
    items: tuple

    def __post_init__(self):
        if not self.items:
            raise ValueError("tuples must be non-empty")

    def __str__(self) -> str:
        return "(" + ", ".join(str(t) for t in self.items) + ")"


Term = Union[Symbol, String, TupleTerm]


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple = ()

    def __post_init__(self):
        if not PREDICATE_RE.match(self.predicate):
            raise ValueError(f"invalid predicate name: {self.predicate!r}")

    @property
    def arity(self) -> int:
        return len(self.terms)

    def sort_key(self) -> tuple:
        return (self.predicate, self.arity, tuple(str(t) for t in self.terms))

    def __str__(self) -> str:
        if not self.terms:
            return self.predicate
        return f"{self.predicate}(" + ", ".join(str(t) for t in self.terms) + ")"


def atom(predicate: str, *terms) -> Atom:
    """Build an atom, coercing plain Python values to terms.

    ``str`` becomes a :class:`Symbol` when it looks like one and a
    :class:`String` otherwise; ``tuple`` becomes a :class:`TupleTerm`.
    Use :class:`String` explicitly for lowercase-identifier strings.
    """
    return Atom(predicate, tuple(_coerce(t) for t in terms))


def _coerce(value) -> Term:
    if isinstance(value, (Symbol, String, TupleTerm)):
        return value
    if isinstance(value, tuple):
        return TupleTerm(tuple(_coerce(v) for v in value))
    if isinstance(value, str):
        return Symbol(value) if SYMBOL_RE.match(value) else String(value)
    raise TypeError(f"cannot convert {value!r} to a term")


class FactSet:
    """Immutable, deduplicated collection of ground atoms in canonical order."""

    __slots__ = ("_atoms", "_set")

    def __init__(self, atoms: Iterable[Atom] = ()):
        unique = frozenset(atoms)
        self._set = unique
        self._atoms = tuple(sorted(unique, key=Atom.sort_key))

    def __iter__(self) -> Iterator[Atom]:
        return iter(self._atoms)

    def __len__(self) -> int:
        return len(self._atoms)

    def __contains__(self, item) -> bool:
        return item in self._set

    def __eq__(self, other) -> bool:
        if not isinstance(other, FactSet):
            return NotImplemented
        return self._set == other._set

    def __hash__(self) -> int:
        return hash(self._set)

    def __or__(self, other: FactSet) -> FactSet:
        return FactSet(self._set | other._set)

    def __le__(self, other: FactSet) -> bool:
        return self._set <= other._set

    def __ge__(self, other: FactSet) -> bool:
        return self._set >= other._set

    def __repr__(self) -> str:
        return f"FactSet({[str(a) for a in self._atoms]})"

    def add(self, item: Atom) -> FactSet:
        return FactSet(self._set | {item})

    def select(self, predicate: str, arity: int | None = None) -> list[Atom]:
        return [
            a for a in self._atoms
            if a.predicate == predicate and (arity is None or a.arity == arity)
        ]

    def derived(self) -> FactSet:
        """Atoms whose predicate is not an intermediate (underscore) one."""
        return FactSet(a for a in self._atoms if not a.predicate.startswith("_"))


# --- tokenizer (shared with the rule parser) --------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<badstring>"[^"\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<if>:-)
  | (?P<eq>==)
  | (?P<ne>!=)
  | (?P<punct>[(),.@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str, error=AspSyntaxError) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise error(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "badstring":
            raise error("unterminated string", line, col)
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind if kind != "punct" else chunk, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, tokens: list[Token], error=AspSyntaxError):
        self.tokens = tokens
        self.pos = 0
        self.error = error

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.next()
        if tok.kind != kind:
            found = tok.text or "end of input"
            raise self.error(f"expected {what or repr(kind)}, found {found!r}", tok.line, tok.column)
        return tok

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise self.error(message, tok.line, tok.column)


def _parse_ground_term(ts: TokenStream) -> Term:
    tok = ts.next()
    if tok.kind == "string":
        return String(tok.text[1:-1])
    if tok.kind == "ident":
        if not SYMBOL_RE.match(tok.text):
            ts.fail(f"constant {tok.text!r} must start with a lowercase letter", tok)
        return Symbol(tok.text)
    if tok.kind == "(":
        items = [_parse_ground_term(ts)]
        while ts.peek().kind == ",":
            ts.next()
            items.append(_parse_ground_term(ts))
        ts.expect(")", "')'")
        return TupleTerm(tuple(items))
    ts.fail(f"expected a term, found {tok.text or 'end of input'!r}", tok)


def _parse_ground_atom(ts: TokenStream) -> Atom:
    tok = ts.expect("ident", "predicate")
    if not PREDICATE_RE.match(tok.text):
        ts.fail(f"predicate {tok.text!r} must start with a lowercase letter", tok)
    terms = []
    if ts.peek().kind == "(":
        ts.next()
        terms.append(_parse_ground_term(ts))
        while ts.peek().kind == ",":
            ts.next()
            terms.append(_parse_ground_term(ts))
        ts.expect(")", "')'")
    return Atom(tok.text, tuple(terms))


def parse_facts(text: str) -> FactSet:
    """Parse period-terminated ground atoms into a :class:`FactSet`.

    >>> len(parse_facts('_goal(x, goal_1). _goal(x, goal_1).'))
    1
    """
    ts = TokenStream(tokenize(text))
    atoms = []
    while ts.peek().kind != "eof":
        atoms.append(_parse_ground_atom(ts))
        ts.expect(".", "'.'")
    return FactSet(atoms)


def render_facts(facts: FactSet) -> str:
    return "".join(f"{a}.\n" for a in facts)
