"""
Logical vocabulary of the blocking-condition planner: instances, predicates,
literals with five truth values, belief state, action schemas with effects and
blocking conditions, plus grounding, effect unification and achiever lookup.

All values are immutable; state updates return new objects.
"""
import hashlib
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

from bcr.errors import CategoryMismatch, MissingBinding, UnknownInstance, UnknownPredicate, UnknownSchema

Key = Tuple[str, Tuple[str, ...]]
Categories = Tuple[str, ...]


class TruthValue(str, Enum):
    TRUE = "true"
    FALSE = "false"
    POSSIBLY_TRUE = "possibly_true"
    POSSIBLY_FALSE = "possibly_false"
    UNKNOWN = "unknown"

    @property
    def is_possibly(self) -> bool:
        return self in (TruthValue.POSSIBLY_TRUE, TruthValue.POSSIBLY_FALSE)

    @property
    def certain(self) -> "TruthValue":
        """possibly_true -> true, possibly_false -> false, others unchanged"""
        if self is TruthValue.POSSIBLY_TRUE:
            return TruthValue.TRUE
        if self is TruthValue.POSSIBLY_FALSE:
            return TruthValue.FALSE
        return self

    def negated(self) -> "TruthValue":
        flips = {
            TruthValue.TRUE: TruthValue.FALSE,
            TruthValue.FALSE: TruthValue.TRUE,
            TruthValue.POSSIBLY_TRUE: TruthValue.POSSIBLY_FALSE,
            TruthValue.POSSIBLY_FALSE: TruthValue.POSSIBLY_TRUE,
        }
        return flips.get(self, self)


class AchieverMode(str, Enum):
    CERTAIN_ONLY = "certain_only"
    INCLUDE_POSSIBLE = "include_possible"


def is_variable(term: str) -> bool:
    return term.startswith("?")


def category_text(categories: Categories) -> str:
    if len(categories) == 1:
        return categories[0]
    return "(either " + " ".join(categories) + ")"


# =====================================================================
# ATOMS
# =====================================================================

@dataclass(frozen=True)
class Instance:
    id: str
    category: str


@dataclass(frozen=True)
class Predicate:
    name: str
    parameter_categories: Tuple[Categories, ...]

    @property
    def arity(self) -> int:
        return len(self.parameter_categories)


@dataclass(frozen=True)
class Literal:
    predicate: str
    arguments: Tuple[str, ...]
    value: TruthValue = TruthValue.TRUE

    @property
    def key(self) -> Key:
        return self.predicate, self.arguments

    @property
    def is_ground(self) -> bool:
        return not any(is_variable(a) for a in self.arguments)

    def variables(self) -> List[str]:
        return [a for a in self.arguments if is_variable(a)]

    def substitute(self, bindings: Mapping[str, str]) -> "Literal":
        """Apply bindings; unbound variables stay in place"""
        return Literal(self.predicate, tuple(bindings.get(a, a) for a in self.arguments), self.value)

    def with_value(self, value: TruthValue) -> "Literal":
        return Literal(self.predicate, self.arguments, value)

    def atom_text(self) -> str:
        return f"{self.predicate}({', '.join(self.arguments)})"

    def __str__(self) -> str:
        return f"{self.atom_text()}={self.value.value}"


# effects share the literal shape; their value may be possibly_*
Effect = Literal


@dataclass(frozen=True)
class BlockingCondition:
    name: str
    trigger: Tuple[Literal, ...]
    resolutions: Tuple[Literal, ...]

    def ground(self, bindings: Mapping[str, str]) -> "BlockingCondition":
        return BlockingCondition(
            self.name,
            tuple(l.substitute(bindings) for l in self.trigger),
            tuple(l.substitute(bindings) for l in self.resolutions),
        )

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "trigger": [str(l) for l in self.trigger],
            "resolution": [str(l) for l in self.resolutions],
        }


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: Tuple[Tuple[str, Categories], ...]
    effects: Tuple[Literal, ...]
    blocking_conditions: Tuple[BlockingCondition, ...] = ()
    repeatable: bool = False

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(v for v, _ in self.parameters)

    def parameter_categories(self, variable: str) -> Optional[Categories]:
        for name, categories in self.parameters:
            if name == variable:
                return categories
        return None

    @property
    def is_sensing(self) -> bool:
        """Information-gathering action: every effect is possibly_*"""
        return all(e.value.is_possibly for e in self.effects)

    def condition(self, name: str) -> BlockingCondition:
        for condition in self.blocking_conditions:
            if condition.name == name:
                return condition
        raise KeyError(f"{self.name} has no blocking condition {name}")


@dataclass(frozen=True)
class GroundedAction:
    schema: str
    bindings: Tuple[Tuple[str, str], ...] = ()

    @property
    def arguments(self) -> Tuple[str, ...]:
        return tuple(value for _, value in self.bindings)

    @property
    def binding_map(self) -> Dict[str, str]:
        return dict(self.bindings)

    def __str__(self) -> str:
        return " ".join((self.schema,) + self.arguments)


@dataclass(frozen=True)
class Domain:
    name: str
    categories: Tuple[str, ...]
    predicates: Dict[str, Predicate]
    schemas: Dict[str, ActionSchema]
    constants: Dict[str, str] = field(default_factory=dict)

    def schema(self, name: str) -> ActionSchema:
        if name not in self.schemas:
            raise UnknownSchema(name)
        return self.schemas[name]

    def predicate(self, name: str) -> Predicate:
        if name not in self.predicates:
            raise UnknownPredicate(name)
        return self.predicates[name]

    def slot_categories(self, literal: Literal, term: str) -> Categories:
        """Categories allowed at the first slot where term occurs in literal"""
        predicate = self.predicate(literal.predicate)
        return predicate.parameter_categories[literal.arguments.index(term)]

    def grounded_effects(self, action: GroundedAction) -> List[Literal]:
        bindings = action.binding_map
        return [e.substitute(bindings) for e in self.schema(action.schema).effects]

    def grounded_conditions(self, action: GroundedAction) -> List[BlockingCondition]:
        bindings = action.binding_map
        return [c.ground(bindings) for c in self.schema(action.schema).blocking_conditions]


# =====================================================================
# BELIEF STATE
# =====================================================================

@dataclass(frozen=True)
class Observation:
    literals: Tuple[Literal, ...] = ()
    instances: Tuple[Instance, ...] = ()

    def to_dict(self) -> Dict:
        return {
            "literals": [str(l) for l in self.literals],
            "instances": [i.id for i in self.instances],
        }


@dataclass(frozen=True)
class BeliefState:
    entries: Mapping[Key, TruthValue] = field(default_factory=dict)
    instances: Mapping[str, str] = field(default_factory=dict)

    @property
    def known_instances(self) -> frozenset:
        return frozenset(self.instances)

    def value_of(self, key: Key) -> TruthValue:
        return self.entries.get(key, TruthValue.UNKNOWN)

    def literals(self) -> List[Literal]:
        return [Literal(p, args, v) for (p, args), v in sorted(self.entries.items())]

    def digest(self) -> str:
        text = "\n".join(str(l) for l in self.literals())
        return hashlib.sha1(text.encode("utf-8")).hexdigest()[:16]


def holds(state: BeliefState, literal: Literal) -> TruthValue:
    """Three-valued lookup: TRUE if stored value matches, FALSE if it contradicts, else UNKNOWN"""
    stored = state.value_of(literal.key)
    if stored is TruthValue.UNKNOWN:
        return TruthValue.UNKNOWN
    return TruthValue.TRUE if stored == literal.value.certain else TruthValue.FALSE


def apply_observation(state: BeliefState, obs: Observation) -> BeliefState:
    """Last-writer-wins overwrite of observed keys; known instances only grow"""
    if not obs.literals and not obs.instances:
        return state
    entries = dict(state.entries)
    for literal in obs.literals:
        entries[literal.key] = literal.value.certain
    instances = dict(state.instances)
    for instance in obs.instances:
        instances.setdefault(instance.id, instance.category)
    return BeliefState(entries, instances)


def condition_triggered(state: BeliefState, condition: BlockingCondition) -> bool:
    return all(holds(state, l) is TruthValue.TRUE for l in condition.trigger)


def condition_resolved(state: BeliefState, condition: BlockingCondition) -> bool:
    return all(holds(state, l) is TruthValue.TRUE for l in condition.resolutions)


# =====================================================================
# GROUNDING AND UNIFICATION
# =====================================================================

def ground(schema: ActionSchema, bindings: Mapping[str, str], instances: Mapping[str, str]) -> GroundedAction:
    """
    Bind every schema parameter to an instance.

    Args:
        schema: the action schema
        bindings: variable -> instance id, must be total over the parameters
        instances: instance id -> category, used for category checks
    """
    ordered = []
    for variable, categories in schema.parameters:
        if variable not in bindings:
            raise MissingBinding(schema.name, variable)
        instance = bindings[variable]
        if instance not in instances:
            raise UnknownInstance(instance)
        if instances[instance] not in categories:
            raise CategoryMismatch(schema.name, variable, instance, instances[instance])
        ordered.append((variable, instance))
    return GroundedAction(schema.name, tuple(ordered))


def _values_match(effect_value: TruthValue, target_value: TruthValue) -> bool:
    return effect_value == target_value or effect_value.certain == target_value


def unify_effect(effect: Literal, target: Literal) -> Optional[Dict[str, str]]:
    """Bindings under which effect produces target, or None"""
    if effect.predicate != target.predicate or len(effect.arguments) != len(target.arguments):
        return None
    if not _values_match(effect.value, target.value):
        return None
    bindings: Dict[str, str] = {}
    for term, value in zip(effect.arguments, target.arguments):
        if is_variable(term):
            if bindings.get(term, value) != value:
                return None
            bindings[term] = value
        elif term != value:
            return None
    return bindings


def _scoped_categories_ok(schema: ActionSchema, effect: Literal, bindings: Mapping[str, str],
                          domain: Domain, instances: Mapping[str, str]) -> bool:
    for variable, instance in bindings.items():
        if instance not in instances:
            return False
        categories = schema.parameter_categories(variable) or domain.slot_categories(effect, variable)
        if instances[instance] not in categories:
            return False
    return True


def achievers(target: Literal, domain: Domain, instances: Mapping[str, str],
              mode: AchieverMode = AchieverMode.INCLUDE_POSSIBLE) -> List[GroundedAction]:
    """
    All grounded actions with an effect that unifies with target.
    Free parameters are enumerated over category-compatible known instances.
    Result is sorted by rendered action text.
    """
    found = {}
    by_category: Dict[str, List[str]] = {}
    for instance_id, category in sorted(instances.items()):
        by_category.setdefault(category, []).append(instance_id)

    for schema in domain.schemas.values():
        for effect in schema.effects:
            if mode is AchieverMode.CERTAIN_ONLY and effect.value.is_possibly:
                continue
            bindings = unify_effect(effect, target)
            if bindings is None or not _scoped_categories_ok(schema, effect, bindings, domain, instances):
                continue
            free = [(v, cats) for v, cats in schema.parameters if v not in bindings]
            pools = [sorted(i for c in cats for i in by_category.get(c, [])) for _, cats in free]
            for combo in itertools.product(*pools):
                full = dict(bindings)
                full.update({v: i for (v, _), i in zip(free, combo)})
                action = GroundedAction(schema.name, tuple((v, full[v]) for v in schema.parameter_names))
                found[str(action)] = action
    return [found[text] for text in sorted(found)]
