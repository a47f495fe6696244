"""Grounding and forward state-space search for typed STRIPS tasks.

``ground`` instantiates action schemas over the task objects and drops
actions that can never fire (static preconditions) or never matter
(backward relevance). ``solve`` runs greedy best-first or A* search guided by
the additive (or max) heuristic on the delete relaxation. ``bfs_solve`` and
``validate`` are deliberately simple, independent implementations used as
oracles.
"""

from __future__ import annotations

import heapq
import itertools
import json
import time
from collections import deque
from dataclasses import dataclass, field

from .pddl import Domain, GroundAtom, TaskProblem

INF = float("inf")
STRATEGIES = ("greedy_hadd", "astar_hadd", "astar_hmax", "bfs")


class PlanningError(RuntimeError):
    pass


class Unsolvable(PlanningError):
    def __init__(self, message: str = "goal unreachable", nodes_expanded: int = 0):
        super().__init__(message)
        self.nodes_expanded = nodes_expanded


class SearchTimeout(PlanningError):
    def __init__(self, time_limit_s: float, nodes_expanded: int):
        super().__init__(f"no plan within {time_limit_s:g}s ({nodes_expanded} nodes expanded)")
        self.time_limit_s = time_limit_s
        self.nodes_expanded = nodes_expanded


class LimitExceeded(PlanningError):
    def __init__(self, node_limit: int):
        super().__init__(f"node limit {node_limit} exceeded")
        self.node_limit = node_limit


@dataclass(frozen=True)
class GroundAction:
    schema: str
    args: tuple
    pre_pos: frozenset
    pre_neg: frozenset
    add: frozenset
    delete: frozenset
    cost: int = 1

    @property
    def name(self) -> str:
        return "(" + " ".join((self.schema, *self.args)) + ")"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class GroundProblem:
    atoms: tuple  # atom id -> GroundAtom
    init: frozenset
    goal: frozenset
    actions: tuple
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", {a: i for i, a in enumerate(self.atoms)})

    def atom_id(self, atom: GroundAtom) -> int:
        return self.index[atom]

    def describe(self, ids) -> list[GroundAtom]:
        return sorted(self.atoms[i] for i in ids)

    def find_action(self, schema: str, *args: str) -> GroundAction:
        for a in self.actions:
            if a.schema == schema and a.args == tuple(args):
                return a
        raise KeyError((schema, args))


@dataclass(frozen=True)
class Plan:
    actions: tuple = ()

    @property
    def cost(self) -> int:
        return sum(a.cost for a in self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def to_json(self) -> list[dict]:
        return [{"schema": a.schema, "args": list(a.args), "cost": a.cost} for a in self.actions]


def plan_to_json(plan: Plan) -> str:
    return json.dumps(plan.to_json(), indent=2)


def plan_from_json(data, problem: GroundProblem) -> Plan:
    """Rebuild a plan from its JSON form against ``problem``'s ground actions."""
    if isinstance(data, str):
        data = json.loads(data)
    return Plan(tuple(problem.find_action(step["schema"], *step["args"]) for step in data))


# --- grounding -------------------------------------------------------------------

def _substitute(args: tuple, binding: dict) -> tuple:
    return tuple(binding.get(a, a) for a in args)


def ground(domain: Domain, task: TaskProblem, costs: dict | None = None, prune: bool = True) -> GroundProblem:
    """Instantiate ``domain`` over ``task``.

    With ``prune`` set, assignments violating a static precondition (one over
    a predicate no action changes) are discarded during enumeration, and
    actions that cannot contribute to the goal are removed afterwards.
    """
    if task.domain_name != domain.name:
        raise ValueError(f"task targets domain {task.domain_name!r}, not {domain.name!r}")
    costs = costs or {}
    objects: dict[str, str] = dict(domain.constants)
    for name, type_name in task.objects:
        objects.setdefault(name, type_name)

    fluent = {lit.predicate for a in domain.actions for lit in a.effect}
    init = set(task.init)

    raw = []
    for schema in domain.actions:
        params = [p for p, _ in schema.parameters]
        candidates = [
            sorted(o for o, t in objects.items() if domain.is_subtype(t, ptype))
            for _, ptype in schema.parameters
        ]
        statics = [lit for lit in schema.precondition if lit.predicate not in fluent] if prune else []
        # check each static literal as soon as its last parameter is bound
        checks_at: list[list] = [[] for _ in params]
        for lit in statics:
            positions = [params.index(a) for a in lit.args if a in params]
            checks_at[max(positions) if positions else 0].append(lit)

        def extend(k: int, binding: dict):
            if k == len(params):
                yield dict(binding)
                return
            for obj in candidates[k]:
                binding[params[k]] = obj
                if all(
                    ((lit.predicate, *_substitute(lit.args, binding)) in init) != lit.negated
                    for lit in checks_at[k]
                ):
                    yield from extend(k + 1, binding)
                del binding[params[k]]

        if not params:
            if all(((lit.predicate, *lit.args) in init) != lit.negated for lit in statics):
                raw.append((schema, {}))
            continue
        for binding in extend(0, {}):
            raw.append((schema, binding))

    instantiated = []
    for schema, binding in raw:
        pre_pos = frozenset((l.predicate, *_substitute(l.args, binding)) for l in schema.precondition if not l.negated)
        pre_neg = frozenset((l.predicate, *_substitute(l.args, binding)) for l in schema.precondition if l.negated)
        add = frozenset((l.predicate, *_substitute(l.args, binding)) for l in schema.add_effects)
        delete = frozenset((l.predicate, *_substitute(l.args, binding)) for l in schema.del_effects) - add
        args = tuple(binding[p] for p, _ in schema.parameters)
        instantiated.append((schema.name, args, pre_pos, pre_neg, add, delete))

    goal = set(task.goal)
    if prune:
        instantiated = _relevant(instantiated, goal)

    universe = set(init) | goal
    for _, _, pp, pn, ad, de in instantiated:
        universe |= pp | pn | ad | de
    atoms = tuple(sorted(universe))
    index = {a: i for i, a in enumerate(atoms)}

    def ids(xs):
        return frozenset(index[x] for x in xs)

    actions = tuple(sorted(
        (
            GroundAction(name, args, ids(pp), ids(pn), ids(ad), ids(de), int(costs.get(name, 1)))
            for name, args, pp, pn, ad, de in instantiated
        ),
        key=lambda a: (a.schema, a.args),
    ))
    return GroundProblem(atoms, ids(init), ids(goal), actions, index)


def _relevant(actions: list, goal: set) -> list:
    """Keep actions that add a needed atom or delete an atom some kept action forbids."""
    needed_pos = set(goal)
    needed_neg: set = set()
    kept = [False] * len(actions)
    changed = True
    while changed:
        changed = False
        for i, (_, _, pre_pos, pre_neg, add, delete) in enumerate(actions):
            if kept[i]:
                continue
            if add & needed_pos or delete & needed_neg:
                kept[i] = True
                needed_pos |= pre_pos
                needed_neg |= pre_neg
                changed = True
    return [a for a, k in zip(actions, kept) if k]


# --- heuristics ------------------------------------------------------------------

class _Compiled:
    """Bitmask view of a ground problem for fast search."""

    def __init__(self, problem: GroundProblem):
        self.problem = problem
        self.n = len(problem.atoms)
        self.actions = problem.actions
        self.pos = [_mask(a.pre_pos) for a in problem.actions]
        self.neg = [_mask(a.pre_neg) for a in problem.actions]
        self.add = [_mask(a.add) for a in problem.actions]
        self.keep = [~_mask(a.delete) for a in problem.actions]
        self.cost = [a.cost for a in problem.actions]
        self.pre_lists = [sorted(a.pre_pos) for a in problem.actions]
        self.add_lists = [sorted(a.add) for a in problem.actions]
        self.init = _mask(problem.init)
        self.goal = _mask(problem.goal)
        self.goal_list = sorted(problem.goal)

    def successors(self, state: int):
        for i in range(len(self.actions)):
            p = self.pos[i]
            if state & p == p and not state & self.neg[i]:
                yield i, (state & self.keep[i]) | self.add[i]

    def relaxed_costs(self, state: int, combine) -> list:
        cost = [0 if state >> i & 1 else INF for i in range(self.n)]
        changed = True
        while changed:
            changed = False
            for i, pre in enumerate(self.pre_lists):
                if pre:
                    c = combine(cost[p] for p in pre)
                    if c == INF:
                        continue
                else:
                    c = 0
                c += self.cost[i]
                for q in self.add_lists[i]:
                    if c < cost[q]:
                        cost[q] = c
                        changed = True
        return cost

    def h_add(self, state: int) -> float:
        cost = self.relaxed_costs(state, sum)
        return sum(cost[g] for g in self.goal_list)

    def h_max(self, state: int) -> float:
        cost = self.relaxed_costs(state, lambda xs: max(xs, default=0))
        return max((cost[g] for g in self.goal_list), default=0)


def _mask(ids) -> int:
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def _state_mask(problem: GroundProblem, state) -> int:
    return _mask(state)


def h_add(problem: GroundProblem, state=None) -> float:
    """Additive delete-relaxation heuristic for ``state`` (atom ids; default: init)."""
    c = _Compiled(problem)
    return c.h_add(c.init if state is None else _mask(state))


def h_max(problem: GroundProblem, state=None) -> float:
    c = _Compiled(problem)
    return c.h_max(c.init if state is None else _mask(state))


# --- search ----------------------------------------------------------------------

def _extract(parents: dict, state: int, compiled: _Compiled) -> Plan:
    steps = []
    while parents[state] is not None:
        prev, i = parents[state]
        steps.append(compiled.actions[i])
        state = prev
    return Plan(tuple(reversed(steps)))


def solve(problem: GroundProblem, time_limit_s: float = 1.0, strategy: str = "greedy_hadd") -> Plan:
    """Find a plan; raises :class:`Unsolvable` or :class:`SearchTimeout`.

    Ties are broken by heuristic value, then cost so far, then the canonical
    index of the generating action, then insertion order.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "bfs":
        return bfs_solve(problem, time_limit_s=time_limit_s)

    c = _Compiled(problem)
    heuristic = c.h_max if strategy == "astar_hmax" else c.h_add
    astar = strategy.startswith("astar")
    deadline = time.perf_counter() + time_limit_s
    counter = itertools.count()

    h0 = heuristic(c.init)
    if h0 == INF:
        raise Unsolvable("goal unreachable even under the delete relaxation")
    best_g = {c.init: 0}
    parents: dict = {c.init: None}
    open_list = [((h0 if astar else h0), h0, 0, -1, next(counter), c.init)]
    if not astar:
        open_list = [(h0, 0, -1, next(counter), c.init)]
    closed: set = set()
    expanded = 0
    while open_list:
        entry = heapq.heappop(open_list)
        state = entry[-1]
        if astar:
            g = entry[2]
            if g > best_g[state]:
                continue
        else:
            g = entry[1]
            if state in closed:
                continue
        closed.add(state)
        if state & c.goal == c.goal:
            return _extract(parents, state, c)
        expanded += 1
        if expanded % 64 == 0 and time.perf_counter() > deadline:
            raise SearchTimeout(time_limit_s, expanded)
        for i, succ in c.successors(state):
            g2 = g + c.cost[i]
            if astar:
                if g2 >= best_g.get(succ, INF):
                    continue
            elif succ in best_g:
                continue
            h = heuristic(succ)
            if h == INF:
                continue
            best_g[succ] = g2
            parents[succ] = (state, i)
            if astar:
                heapq.heappush(open_list, (g2 + h, h, g2, i, next(counter), succ))
            else:
                heapq.heappush(open_list, (h, g2, i, next(counter), succ))
    raise Unsolvable("search space exhausted", expanded)


def bfs_solve(problem: GroundProblem, node_limit: int = 1_000_000, time_limit_s: float | None = None) -> Plan:
    """Breadth-first search over explicit atom sets; returns a shortest plan."""
    deadline = None if time_limit_s is None else time.perf_counter() + time_limit_s
    start = frozenset(problem.init)
    if problem.goal <= start:
        return Plan()
    parents = {start: None}
    frontier = deque([start])
    expanded = 0
    while frontier:
        state = frontier.popleft()
        expanded += 1
        if expanded > node_limit:
            raise LimitExceeded(node_limit)
        if deadline is not None and expanded % 64 == 0 and time.perf_counter() > deadline:
            raise SearchTimeout(time_limit_s, expanded)
        for action in problem.actions:
            if action.pre_pos <= state and not (action.pre_neg & state):
                succ = (state - action.delete) | action.add
                if succ in parents:
                    continue
                parents[succ] = (state, action)
                if problem.goal <= succ:
                    steps = []
                    while parents[succ] is not None:
                        succ, act = parents[succ]
                        steps.append(act)
                    return Plan(tuple(reversed(steps)))
                frontier.append(succ)
    raise Unsolvable("search space exhausted", expanded)


def reachable_states(problem: GroundProblem, limit: int = 10_000) -> int | None:
    """Number of states reachable from init, or None when above ``limit``."""
    seen = {frozenset(problem.init)}
    frontier = deque(seen)
    while frontier:
        state = frontier.popleft()
        for a in problem.actions:
            if a.pre_pos <= state and not (a.pre_neg & state):
                succ = (state - a.delete) | a.add
                if succ not in seen:
                    seen.add(succ)
                    if len(seen) > limit:
                        return None
                    frontier.append(succ)
    return len(seen)


# --- validation ------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    step: int | None = None  # 1-based index of the failing step
    reason: str = ""

    def __bool__(self) -> bool:
        return self.valid


def validate(problem: GroundProblem, plan) -> ValidationResult:
    """Simulate ``plan`` from the initial state under closed-world semantics."""
    state = {problem.atoms[i] for i in problem.init}
    for n, action in enumerate(plan, start=1):
        missing = [problem.atoms[i] for i in action.pre_pos if problem.atoms[i] not in state]
        if missing:
            return ValidationResult(False, n, f"{action}: precondition {_fmt(missing)} not satisfied")
        violated = [problem.atoms[i] for i in action.pre_neg if problem.atoms[i] in state]
        if violated:
            return ValidationResult(False, n, f"{action}: negative precondition violated by {_fmt(violated)}")
        state -= {problem.atoms[i] for i in action.delete}
        state |= {problem.atoms[i] for i in action.add}
    unmet = [problem.atoms[i] for i in problem.goal if problem.atoms[i] not in state]
    if unmet:
        return ValidationResult(False, None, f"goal {_fmt(unmet)} not satisfied")
    return ValidationResult(True)


def _fmt(atoms) -> str:
    return " ".join("(" + " ".join(a) + ")" for a in sorted(atoms))
