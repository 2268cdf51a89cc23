"""
Determinize-and-replan baseline.

The domain is turned into a classical one: possibly_* effects on parameters
become certain, blocking triggers become negated preconditions, certain
effects over free variables become universal, and sensing actions are left
out. A best-first forward search with a weighted additive delete-relaxation
heuristic plans from the closed-world reading of the belief; the plan is
executed until an outcome disagrees with what the classical model expected,
and then the agent replans.
"""
import heapq
import itertools
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from bcr.domain import (
    BeliefState,
    Categories,
    Domain,
    Key,
    Literal,
    TruthValue,
    apply_observation,
    holds,
)
from bcr.errors import Unsolvable
from bcr.parser import Problem

logger = logging.getLogger(__name__)

# literals that tell where an object is; removed for goal objects in the limited condition
LOCATION_PREDICATES = frozenset({"on", "inside", "visible", "located", "near", "holding"})

State = FrozenSet[Key]

# h_add counts shared subgoals such as walking once per goal literal
HEURISTIC_WEIGHT = 0.5
BLIND_EXPANSIONS = 5_000


@dataclass(frozen=True)
class ClassicalSchema:
    name: str
    parameters: Tuple[Tuple[str, Categories], ...]
    preconditions: Tuple[Literal, ...]
    effects: Tuple[Literal, ...]


@dataclass(frozen=True)
class ClassicalDomain:
    name: str
    schemas: Dict[str, ClassicalSchema]
    source: Domain


@dataclass(frozen=True)
class ClassicalAction:
    name: str
    pre_pos: FrozenSet[Key]
    pre_neg: FrozenSet[Key]
    add: FrozenSet[Key]
    delete: FrozenSet[Key]
    # parameter-bound effects, checked against observations during execution
    expected: Tuple[Literal, ...] = ()

    def applicable(self, state: State) -> bool:
        return self.pre_pos <= state and not (self.pre_neg & state)

    def apply(self, state: State) -> State:
        return (state - self.delete) | self.add


@dataclass
class PlanEpisode:
    plan: List[str]
    nodes_expanded: int
    nodes_generated: int
    search_time: float = 0.0


# =====================================================================
# DETERMINIZATION
# =====================================================================

def determinize(domain: Domain) -> ClassicalDomain:
    schemas = {}
    for schema in domain.schemas.values():
        if schema.is_sensing:
            continue
        params = set(schema.parameter_names)
        preconditions = []
        for condition in schema.blocking_conditions:
            preconditions.extend(l.with_value(l.value.certain.negated()) for l in condition.trigger)
        effects = []
        for effect in schema.effects:
            scoped = [v for v in effect.variables() if v not in params]
            if scoped and effect.value.is_possibly:
                continue
            effects.append(effect.with_value(effect.value.certain))
        schemas[schema.name] = ClassicalSchema(schema.name, schema.parameters, tuple(preconditions), tuple(effects))
    return ClassicalDomain(domain.name, schemas, domain)


def ground_actions(cdomain: ClassicalDomain, instances: Mapping[str, str]) -> List[ClassicalAction]:
    """All groundings over the known instances, sorted by name"""
    by_category: Dict[str, List[str]] = {}
    for instance_id, category in sorted(instances.items()):
        by_category.setdefault(category, []).append(instance_id)

    def pool(categories: Categories) -> List[str]:
        return sorted(i for c in categories for i in by_category.get(c, []))

    actions = []
    for schema in cdomain.schemas.values():
        names = [v for v, _ in schema.parameters]
        for combo in itertools.product(*(pool(cats) for _, cats in schema.parameters)):
            bindings = dict(zip(names, combo))
            pre_pos, pre_neg, add, delete, expected = set(), set(), set(), set(), []
            for literal in schema.preconditions:
                ground = literal.substitute(bindings)
                (pre_pos if ground.value is TruthValue.TRUE else pre_neg).add(ground.key)
            for effect in schema.effects:
                ground = effect.substitute(bindings)
                scoped = ground.variables()
                if not scoped:
                    expected.append(ground)
                    expansions = [ground]
                else:
                    pools = [pool(cdomain.source.slot_categories(ground, v)) for v in scoped]
                    expansions = [ground.substitute(dict(zip(scoped, values)))
                                  for values in itertools.product(*pools)]
                for literal in expansions:
                    (add if literal.value is TruthValue.TRUE else delete).add(literal.key)
            name = " ".join([schema.name, *combo])
            actions.append(ClassicalAction(name, frozenset(pre_pos), frozenset(pre_neg),
                                           frozenset(add), frozenset(delete), tuple(expected)))
    return sorted(actions, key=lambda a: a.name)


def closed_world_state(belief: BeliefState) -> State:
    """Atoms believed true; unknown counts as false"""
    return frozenset(k for k, v in belief.entries.items() if v is TruthValue.TRUE)


def goal_holds(state: State, goal: Sequence[Literal]) -> bool:
    return all((l.key in state) == (l.value.certain is TruthValue.TRUE) for l in goal)


# =====================================================================
# SEARCH
# =====================================================================

def h_add(state: State, goal: Sequence[Literal], actions: Sequence[ClassicalAction]) -> float:
    """Additive delete-relaxation estimate; negative goals count 1 each when unmet"""
    cost: Dict[Key, float] = {atom: 0 for atom in state}
    changed = True
    while changed:
        changed = False
        for action in actions:
            total = 1
            for atom in action.pre_pos:
                if atom not in cost:
                    break
                total += cost[atom]
            else:
                for atom in action.add:
                    if cost.get(atom, math.inf) > total:
                        cost[atom] = total
                        changed = True
    h = 0.0
    for literal in goal:
        if literal.value.certain is TruthValue.TRUE:
            h += cost.get(literal.key, math.inf)
        elif literal.key in state:
            h += 1
    return h


def _sweep(actions: Sequence[ClassicalAction], start: State, limit: int) -> Tuple[int, int]:
    """Breadth-first pass over the reachable states, up to limit expansions"""
    seen = {start}
    frontier = deque([start])
    expanded, generated = 0, 1
    while frontier and expanded < limit:
        current = frontier.popleft()
        expanded += 1
        for action in actions:
            if not action.applicable(current):
                continue
            child = action.apply(current)
            generated += 1
            if child not in seen:
                seen.add(child)
                frontier.append(child)
    return expanded, generated


def plan(actions: Sequence[ClassicalAction], state: Iterable[Key], goal: Sequence[Literal],
         max_expansions: int = 50_000, weight: float = HEURISTIC_WEIGHT,
         blind_expansions: int = BLIND_EXPANSIONS) -> PlanEpisode:
    """
    Best-first search ordered by g + weight * h_add, ties by h then insertion order.
    The goal is tested when a node is expanded; children with h = inf are pruned.

    When the start state itself has h = inf no plan exists. The reachable
    states are still swept breadth-first, up to blind_expansions, so the
    episode reports the work an uninformed search spends before giving up.

    Raises:
        Unsolvable: relaxed dead end, frontier exhausted or expansion cap hit
    """
    started = time.perf_counter()
    start = frozenset(state)
    tie = itertools.count()
    h0 = h_add(start, goal, actions)
    if h0 == math.inf:
        expanded, generated = _sweep(actions, start, blind_expansions)
        raise Unsolvable("goal unreachable even under the delete relaxation", expanded, generated)

    expanded, generated = 0, 1
    frontier = [(weight * h0, h0, next(tie), start, ())]
    best_g: Dict[State, int] = {start: 0}
    while frontier:
        _, _, _, current, path = heapq.heappop(frontier)
        if best_g.get(current, math.inf) < len(path):
            continue
        expanded += 1
        if goal_holds(current, goal):
            return PlanEpisode(list(path), expanded, generated, time.perf_counter() - started)
        if expanded >= max_expansions:
            raise Unsolvable(f"expansion cap {max_expansions} reached", expanded, generated)
        g = len(path) + 1
        for action in actions:
            if not action.applicable(current):
                continue
            child = action.apply(current)
            generated += 1
            if g >= best_g.get(child, math.inf):
                continue
            h = h_add(child, goal, actions)
            if h == math.inf:
                continue
            best_g[child] = g
            heapq.heappush(frontier, (g + weight * h, h, next(tie), child, path + (action.name,)))
    raise Unsolvable("search space exhausted", expanded, generated)


def validate_plan(actions: Sequence[ClassicalAction], state: Iterable[Key], steps: Sequence[str],
                  goal: Sequence[Literal]) -> bool:
    """Replay steps under classical semantics: every step applicable, goal reached at the end"""
    by_name = {a.name: a for a in actions}
    current = frozenset(state)
    for name in steps:
        action = by_name.get(name)
        if action is None or not action.applicable(current):
            return False
        current = action.apply(current)
    return goal_holds(current, goal)


def strip_locations(problem: Problem, goal_objects: Iterable[str]) -> Problem:
    """Drop every location literal that mentions a goal object from the known facts"""
    hidden = set(goal_objects)
    if not hidden:
        return problem
    known = tuple(l for l in problem.known
                  if not (l.predicate in LOCATION_PREDICATES and hidden & set(l.arguments)))
    return replace(problem, known=known)


# =====================================================================
# EXECUTION
# =====================================================================

def _belief_from(problem: Problem, instances: Mapping[str, str]) -> BeliefState:
    return BeliefState({l.key: l.value.certain for l in problem.known}, dict(instances))


def _mismatch(action: ClassicalAction, belief: BeliefState) -> Optional[Literal]:
    for literal in action.expected:
        if holds(belief, literal) is TruthValue.FALSE:
            return literal
    return None


def needs_information_gathering(task: str, seed: int) -> Tuple[bool, List[str]]:
    """
    Whether the shortest fully observable plan relies on facts that only
    observation reveals, i.e. it is not classically valid from full knowledge.
    """
    from bcr.kitchen_sim import KitchenSim

    sim, _ = KitchenSim.reset(task, seed)
    steps = sim.oracle_min_plan()
    sim.reveal_locations(sim.things)
    actions = ground_actions(determinize(sim.domain), sim.instances)
    state = frozenset(l.key for l in sim.ground_truth_literals())
    return not validate_plan(actions, state, steps, sim.problem.goal), steps


def replan_execute(cfg):
    """
    Run one determinize-and-replan trial on the kitchen simulator.
    cfg.engine selects full location knowledge (ffreplan) or the limited variant.
    """
    from bcr.executor import (
        BUDGET_EXHAUSTED, DEAD_END, LOG_SCHEMA, LOOP_THRESHOLD, SUCCESS, UNSOLVABLE,
        TrialClock, TrialRecord, observation_delta,
    )
    from bcr.kitchen_sim import KitchenSim, kitchen_domain, load_task
    from bcr.parser import load_domain

    domain = load_domain(cfg.domain_path) if cfg.domain_path else kitchen_domain()
    problem = load_task(cfg.task, domain)
    sim, _ = KitchenSim.reset(problem, cfg.seed, domain)
    goal = list(problem.goal)
    actions = ground_actions(determinize(domain), sim.instances)
    by_name = {a.name: a for a in actions}

    goal_objects = sorted({a for l in goal for a in l.arguments if sim.is_item(a)})
    limited = cfg.engine == "ffreplan-limited"
    sim.reveal_locations(t for t in sim.things if not (limited and t in goal_objects))
    known = replace(problem, known=tuple(sim.ground_truth_literals()))
    if limited:
        known = strip_locations(known, goal_objects)
    belief = _belief_from(known, sim.instances)

    record = TrialRecord(cfg)
    clock = TrialClock(cfg.clock)
    seen: Dict[Tuple[str, str], int] = {}
    trigger = "initial"
    while True:
        if sim.goal_satisfied(goal):
            record.result = SUCCESS
            break
        if len(record.steps) >= cfg.max_actions:
            record.result = BUDGET_EXHAUSTED
            break
        try:
            episode = plan(actions, closed_world_state(belief), goal)
        except Unsolvable as e:
            logger.info(f"⚠️ {cfg.task}/{cfg.engine} seed={cfg.seed}: {e}")
            record.episodes.append(_episode_entry(len(record.episodes), trigger, [], e.nodes_expanded,
                                                  e.nodes_generated, 0.0))
            record.considered.append(e.nodes_expanded)
            record.result = UNSOLVABLE
            break
        search_time = episode.search_time if cfg.clock == "wall" else 0.0
        record.episodes.append(_episode_entry(len(record.episodes), trigger, episode.plan, episode.nodes_expanded,
                                              episode.nodes_generated, search_time))
        record.considered.append(episode.nodes_expanded)
        if not episode.plan:
            # belief says done while ground truth disagrees
            record.result = DEAD_END
            break

        trigger = "plan_exhausted"
        for name in episode.plan:
            if len(record.steps) >= cfg.max_actions:
                break
            digest = belief.digest()
            mark = clock.elapsed()
            result = sim.execute(name)
            clock.tick()
            before = belief
            belief = apply_observation(belief, result.observation)
            seen[(digest, name)] = seen.get((digest, name), 0) + 1
            if seen[(digest, name)] >= LOOP_THRESHOLD:
                record.loop_detected = True
            record.steps.append({
                "type": "step",
                "schema": LOG_SCHEMA,
                "step": len(record.steps),
                "episode": len(record.episodes) - 1,
                "selected": name,
                "outcome": result.outcome,
                "condition": result.condition.to_dict() if result.condition else None,
                "message": result.message,
                "observation": observation_delta(before, belief),
                "elapsed_s": round(clock.since(mark), 6),
            })
            if result.blocked:
                trigger = "blocked"
                break
            if not result.success:
                trigger = "error"
                break
            wrong = _mismatch(by_name[name], belief)
            if wrong is not None:
                logger.debug(f"🔁 '{name}' did not yield {wrong}, replanning")
                trigger = "effect_mismatch"
                break

    record.runtime = clock.elapsed()
    return record


def _episode_entry(index: int, trigger: str, steps: List[str], expanded: int, generated: int,
                   search_time: float) -> Dict:
    return {
        "episode": index,
        "trigger": trigger,
        "plan": steps,
        "nodes_expanded": expanded,
        "nodes_generated": generated,
        "search_time_s": round(search_time, 6),
    }
