"""Typed-STRIPS PDDL: data model, parser, renderer, and task generation.

Ground atoms are plain tuples of names, e.g. ``("has_type", "x", "date")``.
Concrete argument values never enter the PDDL state; they are returned
alongside the task as a binding environment ``{object: value}``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .asp import FactSet, ParseError, String, Symbol
from .catalog import Catalog

GroundAtom = tuple  # (predicate, *objects)


class PddlError(ValueError):
    pass


class PddlSyntaxError(ParseError, PddlError):
    pass


class ArityMismatch(PddlError):
    pass


class UndeclaredType(PddlError):
    pass


class UndeclaredPredicate(PddlError):
    pass


class UndeclaredName(PddlError):
    pass


class TaskGenerationError(ValueError):
    pass


class UnknownConcept(TaskGenerationError):
    pass


class ConflictingValue(TaskGenerationError):
    pass


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple
    negated: bool = False

    def __str__(self) -> str:
        inner = "(" + " ".join((self.predicate, *self.args)) + ")"
        return f"(not {inner})" if self.negated else inner


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple  # ((name, type), ...), names include the leading "?"
    precondition: tuple  # of Literal
    effect: tuple  # of Literal; negated literals are deletes

    @property
    def add_effects(self) -> tuple:
        return tuple(lit for lit in self.effect if not lit.negated)

    @property
    def del_effects(self) -> tuple:
        return tuple(lit for lit in self.effect if lit.negated)


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple
    types: tuple  # ((name, parent), ...)
    constants: tuple  # ((name, type), ...)
    predicates: tuple  # ((name, ((param, type), ...)), ...)
    actions: tuple  # of ActionSchema

    def predicate_arity(self, name: str) -> int | None:
        for pname, params in self.predicates:
            if pname == name:
                return len(params)
        return None

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def type_names(self) -> set[str]:
        return {"object"} | {t for t, _ in self.types}

    def is_subtype(self, child: str, parent: str) -> bool:
        parents = dict(self.types)
        seen = set()
        while child not in seen:
            if child == parent:
                return True
            seen.add(child)
            child = parents.get(child, "object")
        return parent == "object"


@dataclass(frozen=True)
class TaskProblem:
    name: str
    domain_name: str
    objects: tuple  # ((name, type), ...)
    init: tuple  # of GroundAtom
    goal: tuple  # of GroundAtom

    def objects_of_type(self, type_name: str) -> list[str]:
        return [o for o, t in self.objects if t == type_name]


# --- s-expressions -------------------------------------------------------------

_SEXP_TOKEN = re.compile(r'\s+|;[^\n]*|(?P<tok>\(|\)|"[^"\n]*"|[^\s()";]+)|(?P<bad>.)')


class _Form(list):
    """A parsed list that remembers where its opening parenthesis was."""

    loc = (1, 1)


def _read_sexp(text: str):
    stack: list[list] = [_Form()]
    opened: list[tuple[int, int]] = []
    line, line_start = 1, 0
    for m in _SEXP_TOKEN.finditer(text):
        col = m.start() - line_start + 1
        if m.group("bad"):
            raise PddlSyntaxError(f"unexpected character {m.group('bad')!r}", line, col)
        tok = m.group("tok")
        if tok == "(":
            form = _Form()
            form.loc = (line, col)
            stack.append(form)
            opened.append((line, col))
        elif tok == ")":
            if len(stack) == 1:
                raise PddlSyntaxError("unbalanced ')'", line, col)
            done = stack.pop()
            opened.pop()
            stack[-1].append(done)
        elif tok is not None:
            stack[-1].append(tok if tok.startswith('"') else tok.lower())
        chunk = m.group()
        if "\n" in chunk:
            line += chunk.count("\n")
            line_start = m.start() + chunk.rindex("\n") + 1
    if len(stack) > 1:
        raise PddlSyntaxError("unclosed '('", *opened[-1])
    top = stack[0]
    if len(top) != 1 or not isinstance(top[0], list):
        raise PddlSyntaxError("expected a single (define ...) form", 1, 1)
    return top[0]


def _fail(message: str, form=None):
    raise PddlSyntaxError(message, *getattr(form, "loc", (1, 1)))


def _typed_list(items: list) -> list[tuple[str, str]]:
    out, pending = [], []
    i = 0
    while i < len(items):
        tok = items[i]
        if not isinstance(tok, str):
            _fail(f"unexpected list in typed list: {tok}", tok)
        if tok == "-":
            if i + 1 >= len(items) or not isinstance(items[i + 1], str):
                _fail("'-' must be followed by a type name", items)
            out.extend((name, items[i + 1]) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(tok)
        i += 1
    out.extend((name, "object") for name in pending)
    return out


def _literal(form, allow_negation: bool = True) -> Literal:
    if not isinstance(form, list) or not form or not isinstance(form[0], str):
        _fail(f"malformed literal: {form}", form)
    if form[0] == "not":
        if not allow_negation or len(form) != 2:
            _fail(f"unsupported negation: {form}", form)
        inner = _literal(form[1], allow_negation=False)
        return Literal(inner.predicate, inner.args, True)
    if form[0] in ("and", "or", "forall", "exists", "when", "imply", "="):
        _fail(f"unsupported construct {form[0]!r}", form)
    if not all(isinstance(a, str) for a in form[1:]):
        _fail(f"nested term in literal: {form}", form)
    return Literal(form[0], tuple(form[1:]))


def _conjunction(form) -> tuple:
    if form == [] or form is None:
        return ()
    if isinstance(form, list) and form and form[0] == "and":
        return tuple(_literal(f) for f in form[1:])
    return (_literal(form),)


def _section_map(body: list, what: str) -> dict:
    sections = {}
    for sec in body:
        if not isinstance(sec, list) or not sec or not isinstance(sec[0], str) or not sec[0].startswith(":"):
            _fail(f"malformed {what} section: {sec}", sec)
        key = sec[0]
        if key == ":action":
            sections.setdefault(key, []).append(sec)
        elif key in sections:
            _fail(f"duplicate section {key}", sec)
        else:
            sections[key] = sec
    return sections


def _parse_action(form: list) -> ActionSchema:
    if len(form) < 2 or not isinstance(form[1], str):
        _fail("action without a name", form)
    name = form[1]
    fields = {}
    rest = form[2:]
    if len(rest) % 2:
        _fail(f"action {name}: odd number of keyword fields", form)
    for key, value in zip(rest[::2], rest[1::2]):
        if key not in (":parameters", ":precondition", ":effect"):
            _fail(f"action {name}: unknown field {key}", form)
        fields[key] = value
    params = _typed_list(fields.get(":parameters", []))
    return ActionSchema(
        name=name,
        parameters=tuple(params),
        precondition=_conjunction(fields.get(":precondition")),
        effect=_conjunction(fields.get(":effect")),
    )


def parse_domain(text: str) -> Domain:
    form = _read_sexp(text)
    if not form or form[0] != "define" or len(form) < 2 or not isinstance(form[1], list) \
            or len(form[1]) != 2 or form[1][0] != "domain":
        _fail("expected (define (domain <name>) ...)", form)
    sections = _section_map(form[2:], "domain")
    unknown = set(sections) - {":requirements", ":types", ":constants", ":predicates", ":action"}
    if unknown:
        _fail(f"unsupported domain sections: {sorted(unknown)}", form)
    types = tuple(_typed_list(sections.get(":types", [None])[1:]))
    constants = tuple(_typed_list(sections.get(":constants", [None])[1:]))
    predicates = []
    for p in sections.get(":predicates", [None])[1:]:
        if not isinstance(p, list) or not p or not isinstance(p[0], str):
            _fail(f"malformed predicate declaration: {p}", p)
        predicates.append((p[0], tuple(_typed_list(p[1:]))))
    domain = Domain(
        name=form[1][1],
        requirements=tuple(sections.get(":requirements", [None])[1:]),
        types=types,
        constants=constants,
        predicates=tuple(predicates),
        actions=tuple(_parse_action(a) for a in sections.get(":action", [])),
    )
    validate_domain(domain)
    return domain


def validate_domain(domain: Domain) -> None:
    names = [t for t, _ in domain.types]
    if len(names) != len(set(names)):
        raise PddlError("duplicate type names")
    known = domain.type_names()
    for t, parent in domain.types:
        if parent not in known:
            raise UndeclaredType(f"type {t} has undeclared parent {parent}")
    for c, t in domain.constants:
        if t not in known:
            raise UndeclaredType(f"constant {c} has undeclared type {t}")
    for pname, params in domain.predicates:
        for _, t in params:
            if t not in known:
                raise UndeclaredType(f"predicate {pname} uses undeclared type {t}")
    pred_names = [p for p, _ in domain.predicates]
    if len(pred_names) != len(set(pred_names)):
        raise PddlError("duplicate predicate declarations")
    constants = {c for c, _ in domain.constants}
    action_names = set()
    for action in domain.actions:
        if action.name in action_names:
            raise PddlError(f"duplicate action {action.name}")
        action_names.add(action.name)
        params = {p for p, _ in action.parameters}
        for p, t in action.parameters:
            if not p.startswith("?"):
                raise PddlError(f"action {action.name}: parameter {p} must start with '?'")
            if t not in known:
                raise UndeclaredType(f"action {action.name}: parameter {p} has undeclared type {t}")
        for lit in action.precondition + action.effect:
            arity = domain.predicate_arity(lit.predicate)
            if arity is None:
                raise UndeclaredPredicate(f"action {action.name} uses undeclared predicate {lit.predicate}")
            if arity != len(lit.args):
                raise ArityMismatch(
                    f"action {action.name}: {lit.predicate} expects {arity} arguments, got {len(lit.args)}"
                )
            for arg in lit.args:
                if arg.startswith("?"):
                    if arg not in params:
                        raise UndeclaredName(f"action {action.name}: {arg} is not a parameter")
                elif arg not in constants:
                    raise UndeclaredName(f"action {action.name}: {arg} is not a declared constant")


def _ground_atoms(form, where: str) -> tuple:
    atoms = []
    for lit in _conjunction(form):
        if lit.negated:
            _fail(f"negative literal in {where}", form)
        atoms.append((lit.predicate, *lit.args))
    return tuple(atoms)


def parse_task(text: str, domain: Domain | None = None) -> TaskProblem:
    form = _read_sexp(text)
    if not form or form[0] != "define" or len(form) < 2 or not isinstance(form[1], list) \
            or len(form[1]) != 2 or form[1][0] != "problem":
        _fail("expected (define (problem <name>) ...)", form)
    sections = _section_map(form[2:], "problem")
    if ":domain" not in sections or len(sections[":domain"]) != 2:
        _fail("missing (:domain <name>)", form)
    unknown = set(sections) - {":domain", ":objects", ":init", ":goal", ":requirements"}
    if unknown:
        _fail(f"unsupported problem sections: {sorted(unknown)}", form)
    init_forms = sections.get(":init", [None])[1:]
    goal_section = sections.get(":goal", [None, []])
    if len(goal_section) != 2:
        _fail("(:goal ...) takes exactly one formula", goal_section)
    init = []
    for f in init_forms:
        init.extend(_ground_atoms(f, ":init"))
    task = TaskProblem(
        name=form[1][1],
        domain_name=sections[":domain"][1],
        objects=tuple(_typed_list(sections.get(":objects", [None])[1:])),
        init=tuple(init),
        goal=_ground_atoms(goal_section[1], ":goal"),
    )
    validate_task(task, domain)
    return task


def validate_task(task: TaskProblem, domain: Domain | None = None) -> None:
    if len(set(task.init)) != len(task.init):
        raise PddlError("duplicate atoms in :init")
    if domain is None:
        return
    if task.domain_name != domain.name:
        raise PddlError(f"task is for domain {task.domain_name!r}, not {domain.name!r}")
    known = domain.type_names()
    for o, t in task.objects:
        if t not in known:
            raise UndeclaredType(f"object {o} has undeclared type {t}")
    names = {o for o, _ in task.objects} | {c for c, _ in domain.constants}
    for atom in task.init + task.goal:
        arity = domain.predicate_arity(atom[0])
        if arity is None:
            raise UndeclaredPredicate(f"undeclared predicate {atom[0]}")
        if arity != len(atom) - 1:
            raise ArityMismatch(f"{atom[0]} expects {arity} arguments, got {len(atom) - 1}")
        for arg in atom[1:]:
            if arg not in names:
                raise UndeclaredName(f"{arg} is neither an object nor a constant")


def _atom_text(atom: GroundAtom) -> str:
    return "(" + " ".join(atom) + ")"


def render_task(task: TaskProblem) -> str:
    lines = [f"(define (problem {task.name})", f"    (:domain {task.domain_name})", "    (:objects"]
    groups: list[tuple[str, list[str]]] = []
    for name, type_name in task.objects:
        if groups and groups[-1][0] == type_name:
            groups[-1][1].append(name)
        else:
            groups.append((type_name, [name]))
    lines += [f"        {' '.join(names)} - {t}" for t, names in groups]
    lines += ["    )", "    (:init"]
    lines += [f"        {_atom_text(a)}" for a in task.init]
    lines += ["    )", "    (:goal (and"]
    lines += [f"        {_atom_text(a)}" for a in task.goal]
    lines += ["    ))", ")"]
    return "\n".join(lines) + "\n"


def load_domain(path=None) -> Domain:
    from .catalog import data_path

    path = Path(path) if path is not None else data_path("domain.pddl")
    return parse_domain(path.read_text(encoding="utf-8"))


# --- task generation -------------------------------------------------------------

def _value_text(term) -> str:
    return term.value if isinstance(term, String) else str(term)


def generate_task(materialized: FactSet, catalog: Catalog, problem_name: str = "query"):
    """Compile a materialized representation into ``(TaskProblem, bindings)``.

    Each ``goal(x, t)`` becomes a ``var`` object ``x`` of concept ``t``. Each
    materialized predicate ``p`` of ``t`` gets an argument object ``x_p`` and a
    goal atom ``(P x x_p)``; a string value marks ``x_p`` as known and lands in
    the bindings. A value that names another goal variable ``y`` is dataflow:
    the goal atom becomes ``(P x y)`` and ``y`` also receives the argument's
    value type so the consuming API accepts it once ``y`` has been produced.
    """
    if materialized.select("error", 1):
        raise TaskGenerationError("materialized representation contains error atoms")
    goal_atoms = materialized.select("goal", 2)
    goal_vars = {_value_text(a.terms[0]) for a in goal_atoms}

    var_objects: list[str] = []
    var_types: list[str] = []
    init: list[GroundAtom] = []
    goal: list[GroundAtom] = []
    bindings: dict[str, str] = {}

    def add(seq: list, item) -> None:
        if item not in seq:
            seq.append(item)

    for ga in goal_atoms:
        x, concept = (_value_text(t) for t in ga.terms)
        gdef = catalog.by_concept(concept)
        if gdef is None:
            raise UnknownConcept(f"goal({x}, {concept}): concept not in catalog")
        add(var_objects, x)
        add(var_types, concept)
        add(init, ("has_type", x, concept))
        if gdef.goal_predicate:
            goal.append((gdef.goal_predicate, x))
        for arg in gdef.args:
            vt = arg.pddl_value_type
            for m in arg.materialized:
                values = {
                    a.terms[1] for a in materialized.select(m.predicate, 3)
                    if _value_text(a.terms[0]) == x
                }
                if len(values) > 1:
                    shown = sorted(str(v) for v in values)
                    raise ConflictingValue(f"{m.predicate}({x}, ...) has several values: {shown}")
                value = next(iter(values), None)
                add(var_types, vt)
                if isinstance(value, Symbol) and value.name in goal_vars:
                    add(init, ("has_type", value.name, vt))
                    goal.append((m.pddl_predicate, x, value.name))
                    continue
                obj = f"{x}_{m.predicate}"
                add(var_objects, obj)
                add(init, ("has_type", obj, vt))
                goal.append((m.pddl_predicate, x, obj))
                if value is not None:
                    add(init, ("has_value", obj))
                    bindings[obj] = _value_text(value)

    objects = tuple((o, "var") for o in var_objects) + tuple((t, "var_type") for t in var_types)
    task = TaskProblem(
        name=problem_name,
        domain_name=catalog.domain,
        objects=objects,
        init=tuple(init),
        goal=tuple(goal),
    )
    return task, bindings
