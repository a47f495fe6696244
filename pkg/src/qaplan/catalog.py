"""Goal catalog: supported goals, argument types, and their PDDL mapping.

The catalog drives two things: the translation prompt, and task generation,
which needs to know for every goal concept which materialized predicates
become which PDDL goal predicates.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

DATE_RE = re.compile(r"(0[1-9]|1[0-2])/(0[1-9]|[12][0-9]|3[01])/[0-9]{4}\Z")
AMOUNT_RE = re.compile(r"[0-9]+\.[0-9]{2}\Z")


class CatalogError(ValueError):
    pass


class SchemaError(CatalogError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class DanglingReference(CatalogError):
    pass


class UnknownGoal(KeyError):
    pass


def data_path(name: str) -> Path:
    """Path of a file bundled in ``qaplan/data``."""
    return Path(str(resources.files("qaplan") / "data" / name))


@dataclass(frozen=True)
class ArgType:
    name: str
    kind: str  # "examples" or "possible_values"
    examples: dict = field(default_factory=dict)
    possible_values: tuple = ()
    format: str | None = None  # "date", "date_period", "amount"


@dataclass(frozen=True)
class MaterializedPredicate:
    predicate: str
    value_type: str
    pddl_predicate: str
    label: str
    aliases: tuple = ()


@dataclass(frozen=True)
class ArgSpec:
    name: str
    description: str
    arg_type: ArgType
    materialized: tuple  # of MaterializedPredicate
    pddl_value_type: str


@dataclass(frozen=True)
class GoalDef:
    goal_id: str
    concept: str
    api: str
    description: str
    args: tuple  # of ArgSpec
    examples: tuple = ()
    mention: str | None = None
    goal_predicate: str | None = None
    executable: bool = True


@dataclass(frozen=True)
class InContextExample:
    goals: str
    text: str
    answer: str


@dataclass(frozen=True)
class Catalog:
    domain: str
    value_types: tuple
    arg_types: tuple
    goals: tuple
    in_context_examples: tuple

    def goal(self, goal_id: str) -> GoalDef:
        for g in self.goals:
            if g.goal_id == goal_id:
                return g
        raise UnknownGoal(goal_id)

    def by_concept(self, concept: str) -> GoalDef | None:
        return next((g for g in self.goals if g.concept == concept), None)

    def by_api(self, api: str) -> GoalDef | None:
        return next((g for g in self.goals if g.api == api), None)

    def concepts(self) -> list[str]:
        return [g.concept for g in self.goals]

    def find_predicate(self, name: str, goal: GoalDef | None = None):
        """Resolve a materialized predicate name (or alias) to ``(ArgSpec, MaterializedPredicate)``."""
        for g in [goal] if goal is not None else self.goals:
            for arg in g.args:
                for m in arg.materialized:
                    if name == m.predicate or name in m.aliases:
                        return arg, m
        return None

    def label_for(self, predicate: str) -> str:
        found = self.find_predicate(predicate)
        return found[1].label if found else predicate.replace("_", " ")


def required_args(catalog: Catalog, goal_id: str) -> list[ArgSpec]:
    return list(catalog.goal(goal_id).args)


# --- loading -------------------------------------------------------------------

_IDENT = {"type": "string", "pattern": "^[a-z][A-Za-z0-9_]*$"}

CATALOG_SCHEMA = {
    "type": "object",
    "required": ["domain", "value_types", "arg_types", "goals", "in_context_examples"],
    "additionalProperties": False,
    "properties": {
        "domain": {"type": "string", "minLength": 1},
        "value_types": {"type": "array", "items": _IDENT},
        "arg_types": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "additionalProperties": False,
                "properties": {
                    "name": _IDENT,
                    "kind": {"enum": ["examples", "possible_values"]},
                    "format": {"enum": ["date", "date_period", "amount", None]},
                    "examples": {"type": "object"},
                    "possible_values": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "goals": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["goal_id", "concept", "api", "description", "args"],
                "additionalProperties": False,
                "properties": {
                    "goal_id": _IDENT,
                    "concept": _IDENT,
                    "api": _IDENT,
                    "description": {"type": "string"},
                    "mention": {"anyOf": [_IDENT, {"type": "null"}]},
                    "goal_predicate": {"anyOf": [_IDENT, {"type": "null"}]},
                    "executable": {"type": "boolean"},
                    "examples": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["text", "answer"],
                            "properties": {"text": {"type": "string"}, "answer": {"type": "string"}},
                        },
                    },
                    "args": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "arg_type", "pddl_value_type", "materialized"],
                            "additionalProperties": False,
                            "properties": {
                                "name": _IDENT,
                                "description": {"type": "string"},
                                "arg_type": {"type": "string"},
                                "pddl_value_type": _IDENT,
                                "materialized": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {
                                        "type": "object",
                                        "required": ["predicate", "value_type", "pddl_predicate"],
                                        "additionalProperties": False,
                                        "properties": {
                                            "predicate": _IDENT,
                                            "value_type": _IDENT,
                                            "pddl_predicate": _IDENT,
                                            "label": {"type": "string"},
                                            "aliases": {"type": "array", "items": {"type": "string"}},
                                        },
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
        "in_context_examples": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["goals", "text", "answer"],
                "additionalProperties": False,
                "properties": {
                    "goals": {"type": "string"},
                    "text": {"type": "string"},
                    "answer": {"type": "string"},
                },
            },
        },
    },
}


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _check_format(fmt: str | None, value, path: str) -> None:
    if fmt == "date_period":
        if not (isinstance(value, list) and len(value) == 2 and all(DATE_RE.match(v) for v in value)):
            raise SchemaError(path, f"expected a pair of MM/DD/YYYY dates, got {value!r}")
    elif fmt == "date":
        if not (isinstance(value, str) and DATE_RE.match(value)):
            raise SchemaError(path, f"expected a MM/DD/YYYY date, got {value!r}")
    elif fmt == "amount":
        if not (isinstance(value, str) and AMOUNT_RE.match(value)):
            raise SchemaError(path, f"expected an amount like 12.50, got {value!r}")
    elif not isinstance(value, (str, list)):
        raise SchemaError(path, f"unsupported example value {value!r}")


def _load_arg_type(doc: dict, path: str) -> ArgType:
    kind = doc["kind"]
    has_examples, has_values = "examples" in doc, "possible_values" in doc
    if (kind == "examples") != has_examples or has_examples == has_values:
        raise SchemaError(path, f"kind {kind!r} requires exactly the {kind!r} field")
    examples = {}
    for surface, value in doc.get("examples", {}).items():
        _check_format(doc.get("format"), value, f"{path}.examples[{surface!r}]")
        examples[surface] = tuple(value) if isinstance(value, list) else value
    return ArgType(
        name=doc["name"],
        kind=kind,
        examples=examples,
        possible_values=tuple(doc.get("possible_values", ())),
        format=doc.get("format"),
    )


def load_catalog(document: str | dict) -> Catalog:
    """Build a validated :class:`Catalog` from JSON text or an already decoded object."""
    doc = json.loads(document) if isinstance(document, str) else document
    errors = sorted(jsonschema.Draft202012Validator(CATALOG_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        raise SchemaError(_json_path(err.path), err.message)

    arg_types = {}
    for i, at in enumerate(doc["arg_types"]):
        if at["name"] in arg_types:
            raise SchemaError(f"$.arg_types[{i}].name", f"duplicate arg type {at['name']!r}")
        arg_types[at["name"]] = _load_arg_type(at, f"$.arg_types[{i}]")

    value_types = tuple(doc["value_types"])
    goals = []
    seen_ids, seen_concepts = set(), set()
    for i, g in enumerate(doc["goals"]):
        path = f"$.goals[{i}]"
        if g["goal_id"] in seen_ids:
            raise SchemaError(f"{path}.goal_id", f"duplicate goal id {g['goal_id']!r}")
        if g["concept"] in seen_concepts:
            raise SchemaError(f"{path}.concept", f"duplicate concept {g['concept']!r}")
        seen_ids.add(g["goal_id"])
        seen_concepts.add(g["concept"])
        args, arg_names, preds = [], set(), set()
        for j, a in enumerate(g["args"]):
            apath = f"{path}.args[{j}]"
            if a["name"] in arg_names:
                raise SchemaError(f"{apath}.name", f"duplicate argument {a['name']!r}")
            arg_names.add(a["name"])
            if a["arg_type"] not in arg_types:
                raise DanglingReference(f"{apath}.arg_type: unknown arg type {a['arg_type']!r}")
            if a["pddl_value_type"] not in value_types:
                raise DanglingReference(
                    f"{apath}.pddl_value_type: {a['pddl_value_type']!r} is not a declared value type"
                )
            mats = []
            for m in a["materialized"]:
                if m["predicate"] in preds:
                    raise SchemaError(f"{apath}.materialized", f"predicate {m['predicate']!r} mapped twice")
                preds.add(m["predicate"])
                mats.append(MaterializedPredicate(
                    predicate=m["predicate"],
                    value_type=m["value_type"],
                    pddl_predicate=m["pddl_predicate"],
                    label=m.get("label") or m["predicate"].replace("_", " "),
                    aliases=tuple(m.get("aliases", ())),
                ))
            args.append(ArgSpec(
                name=a["name"],
                description=a.get("description", ""),
                arg_type=arg_types[a["arg_type"]],
                materialized=tuple(mats),
                pddl_value_type=a["pddl_value_type"],
            ))
        goals.append(GoalDef(
            goal_id=g["goal_id"],
            concept=g["concept"],
            api=g["api"],
            description=g["description"],
            args=tuple(args),
            examples=tuple((e["text"], e["answer"]) for e in g.get("examples", ())),
            mention=g.get("mention"),
            goal_predicate=g.get("goal_predicate"),
            executable=g.get("executable", True),
        ))

    return Catalog(
        domain=doc["domain"],
        value_types=value_types,
        arg_types=tuple(arg_types.values()),
        goals=tuple(goals),
        in_context_examples=tuple(InContextExample(**e) for e in doc["in_context_examples"]),
    )


def load_catalog_file(path=None) -> Catalog:
    path = Path(path) if path is not None else data_path("catalog.json")
    return load_catalog(path.read_text(encoding="utf-8"))


# --- prompting -----------------------------------------------------------------

INSTRUCTIONS = """\
You are given a set of goal types together with the information each goal requires.
From the user query below, extract:
1. Every goal the query asks for, chosen from the given goal types.
Write each extracted goal <x> of type <T> as "_goal(<x>, <T>).".
2. Any required information for an extracted goal that the query mentions.
When an argument lists possible values, pick the matching one from that list.
Answer with ASP facts only."""


def _arg_type_payload(at: ArgType) -> dict:
    if at.kind == "possible_values":
        return {"possible_values": list(at.possible_values)}
    return {"examples": {k: list(v) if isinstance(v, tuple) else v for k, v in at.examples.items()}}


def goals_block(catalog: Catalog) -> str:
    payload = [
        {
            "type": g.goal_id,
            "description": g.description,
            "required information": [
                {"name": a.name, "description": a.description, "type": _arg_type_payload(a.arg_type)}
                for a in g.args
            ],
            "examples": [{text: answer} for text, answer in g.examples],
        }
        for g in catalog.goals
    ]
    return json.dumps(payload, indent=1, ensure_ascii=False)


def build_prompt(catalog: Catalog, query: str) -> str:
    parts = [INSTRUCTIONS, "", "Here are some examples of goal types, a text, and the expected answer.", ""]
    for ex in catalog.in_context_examples:
        parts += [f'Goals: """{ex.goals}"""', f'Text: """{ex.text}"""', "Answer:", ex.answer, ""]
    parts += [f'Goals: """{goals_block(catalog)}"""', "", f'Text: """{query}"""', "Answer:"]
    return "\n".join(parts)
