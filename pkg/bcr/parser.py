"""
Reader/writer for the .bcr definition language (an s-expression dialect in the
STRIPS/PDDL lineage that can also express blocking conditions) and the
canonical action strings used in prompts and logs.

Domain:
    (define (domain NAME)
      (:categories CAT ...)
      [(:constants ID - CAT ...)]
      (:predicates (NAME ?v - CAT ...) ...)
      (:action NAME :parameters (?v - CAT ...) [:repeatable]
               :effects (((PRED TERM ...) VALUE) ...)
               [:blocked-when (:condition NAME :trigger (...) :resolution (...)) ...])
      ...)

Problem:
    (define (problem NAME) (:domain NAME) (:objects ID - CAT ...)
      (:known ((PRED ID ...) VALUE) ...) (:goal ((PRED ID ...) VALUE) ...))

A category slot may also be written (either CAT CAT ...).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from bcr.domain import (
    ActionSchema, BlockingCondition, Categories, Domain, GroundedAction, Literal,
    Predicate, TruthValue, category_text, ground, is_variable,
)
from bcr.errors import ArityMismatch, DomainSyntaxError, UnknownInstance, UnknownPredicate, UnknownSchema, ValidationError

logger = logging.getLogger(__name__)

EFFECT_VALUES = {v.value: v for v in (TruthValue.TRUE, TruthValue.FALSE,
                                      TruthValue.POSSIBLY_TRUE, TruthValue.POSSIBLY_FALSE)}
CERTAIN_VALUES = {"true": TruthValue.TRUE, "false": TruthValue.FALSE}


# =====================================================================
# S-EXPRESSION READER
# =====================================================================

@dataclass
class Atom:
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: List[Union["SList", Atom]]
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0


Node = Union[SList, Atom]


def read_sexpr(text: str) -> SList:
    """Read exactly one top-level list; positions are 1-based"""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DomainSyntaxError(1, e.start + 1, "UTF-8 text")

    stack: List[SList] = []
    root: Optional[SList] = None
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "(":
            if root is not None and not stack:
                raise DomainSyntaxError(line, col, "end of input")
            node = SList([], line, col)
            if stack:
                stack[-1].items.append(node)
            else:
                root = node
            stack.append(node)
            i += 1
            col += 1
            continue
        if ch == ")":
            if not stack:
                raise DomainSyntaxError(line, col, "'(' before ')'")
            closed = stack.pop()
            closed.end_line, closed.end_col = line, col
            i += 1
            col += 1
            continue
        start_col = col
        j = i
        while j < n and not text[j].isspace() and text[j] not in "();":
            j += 1
        if not stack:
            raise DomainSyntaxError(line, start_col, "'('")
        stack[-1].items.append(Atom(text[i:j], line, start_col))
        col += j - i
        i = j

    if stack:
        raise DomainSyntaxError(line, col, "')'")
    if root is None:
        raise DomainSyntaxError(line, col, "'('")
    return root


def _fail(node: Node, expected: str):
    raise DomainSyntaxError(node.line, node.col, expected)


def _atom(node: Node, expected: str = "symbol") -> str:
    if not isinstance(node, Atom):
        _fail(node, expected)
    return node.text


def _slist(node: Node, expected: str = "'('") -> SList:
    if not isinstance(node, SList):
        _fail(node, expected)
    return node


def _end_of(lst: SList) -> Tuple[int, int]:
    return lst.end_line or lst.line, lst.end_col or lst.col


def _expect_keyword(lst: SList, index: int, keyword: str) -> None:
    if index >= len(lst.items):
        line, col = _end_of(lst)
        raise DomainSyntaxError(line, col, keyword)
    node = lst.items[index]
    if not isinstance(node, Atom) or node.text.lower() != keyword:
        _fail(node, keyword)


def _item(lst: SList, index: int, expected: str) -> Node:
    if index >= len(lst.items):
        line, col = _end_of(lst)
        raise DomainSyntaxError(line, col, expected)
    return lst.items[index]


def _categories(node: Node) -> Categories:
    if isinstance(node, Atom):
        return (node.text,)
    items = node.items
    if not items or _atom(items[0], "either") != "either" or len(items) < 2:
        _fail(node, "(either CAT ...)")
    return tuple(_atom(i, "category") for i in items[1:])


def _typed_list(lst: SList) -> List[Tuple[str, Categories]]:
    """Parse 'x - cat y z - cat' groups into ordered (name, categories) pairs"""
    result, pending = [], []
    i = 0
    while i < len(lst.items):
        node = lst.items[i]
        if isinstance(node, Atom) and node.text == "-":
            if not pending or i + 1 >= len(lst.items):
                _fail(node, "NAME - CATEGORY")
            categories = _categories(lst.items[i + 1])
            result.extend((name, categories) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(_atom(node, "name"))
        i += 1
    if pending:
        line, col = _end_of(lst)
        raise DomainSyntaxError(line, col, "'- CATEGORY'")
    return result


def _literal_list(node: Node, values: Mapping[str, TruthValue]) -> List[Literal]:
    lst = _slist(node, "'(' effect list")
    literals = []
    for entry in lst.items:
        pair = _slist(entry, "((PREDICATE TERM ...) VALUE)")
        if len(pair.items) != 2:
            _fail(pair, "((PREDICATE TERM ...) VALUE)")
        atom = _slist(pair.items[0], "(PREDICATE TERM ...)")
        if not atom.items:
            _fail(atom, "predicate name")
        value_text = _atom(pair.items[1], "truth value").lower()
        if value_text not in values:
            _fail(pair.items[1], " or ".join(values))
        literals.append(Literal(
            _atom(atom.items[0], "predicate name"),
            tuple(_atom(a, "term") for a in atom.items[1:]),
            values[value_text],
        ))
    return literals


# =====================================================================
# DOMAIN
# =====================================================================

def _parse_condition(node: Node) -> BlockingCondition:
    lst = _slist(node, "(:condition ...)")
    _expect_keyword(lst, 0, ":condition")
    name = _atom(_item(lst, 1, "condition name"), "condition name")
    _expect_keyword(lst, 2, ":trigger")
    trigger = _literal_list(_item(lst, 3, "trigger list"), CERTAIN_VALUES)
    _expect_keyword(lst, 4, ":resolution")
    resolutions = _literal_list(_item(lst, 5, "resolution list"), CERTAIN_VALUES)
    if len(lst.items) > 6:
        _fail(lst.items[6], "')'")
    return BlockingCondition(name, tuple(trigger), tuple(resolutions))


def _parse_action(lst: SList) -> ActionSchema:
    name = _atom(_item(lst, 1, "action name"), "action name")
    _expect_keyword(lst, 2, ":parameters")
    parameters = _typed_list(_slist(_item(lst, 3, "parameter list"), "parameter list"))
    i = 4
    repeatable = False
    if i < len(lst.items) and isinstance(lst.items[i], Atom) and lst.items[i].text.lower() == ":repeatable":
        repeatable = True
        i += 1
    _expect_keyword(lst, i, ":effects")
    effects = _literal_list(_item(lst, i + 1, "effect list"), EFFECT_VALUES)
    i += 2
    conditions = []
    if i < len(lst.items):
        _expect_keyword(lst, i, ":blocked-when")
        i += 1
        if i >= len(lst.items):
            line, col = _end_of(lst)
            raise DomainSyntaxError(line, col, "(:condition ...)")
        while i < len(lst.items):
            conditions.append(_parse_condition(lst.items[i]))
            i += 1
    return ActionSchema(name, tuple(parameters), tuple(effects), tuple(conditions), repeatable)


def parse_domain(text: str) -> Domain:
    """Parse and validate a domain definition"""
    root = read_sexpr(text)
    _expect_keyword(root, 0, "define")
    header = _slist(_item(root, 1, "(domain NAME)"), "(domain NAME)")
    _expect_keyword(header, 0, "domain")
    name = _atom(_item(header, 1, "domain name"), "domain name")

    categories: Tuple[str, ...] = ()
    constants: Dict[str, str] = {}
    predicates: Dict[str, Predicate] = {}
    schemas: Dict[str, ActionSchema] = {}

    for node in root.items[2:]:
        section = _slist(node, "domain section")
        head = _atom(_item(section, 0, "section keyword"), "section keyword").lower()
        if head == ":categories":
            categories = tuple(_atom(a, "category") for a in section.items[1:])
        elif head == ":constants":
            inner = SList(section.items[1:], section.line, section.col, section.end_line, section.end_col)
            for const, cats in _typed_list(inner):
                if len(cats) != 1:
                    _fail(section, "a single category per constant")
                constants[const] = cats[0]
        elif head == ":predicates":
            for entry in section.items[1:]:
                decl = _slist(entry, "(NAME ?v - CAT ...)")
                pname = _atom(_item(decl, 0, "predicate name"), "predicate name")
                inner = SList(decl.items[1:], decl.line, decl.col, decl.end_line, decl.end_col)
                slots = tuple(cats for _, cats in _typed_list(inner))
                if pname in predicates:
                    raise ValidationError(pname, "predicate declared twice")
                predicates[pname] = Predicate(pname, slots)
        elif head == ":action":
            schema = _parse_action(section)
            if schema.name in schemas:
                raise ValidationError(schema.name, "action declared twice")
            schemas[schema.name] = schema
        else:
            _fail(section.items[0], ":categories, :constants, :predicates or :action")

    domain = Domain(name, categories, predicates, schemas, constants)
    validate_domain(domain)
    return domain


def _check_literal(domain: Domain, schema: ActionSchema, literal: Literal, allow_scoped: bool) -> None:
    if literal.predicate not in domain.predicates:
        raise UnknownPredicate(literal.predicate)
    predicate = domain.predicates[literal.predicate]
    if predicate.arity != len(literal.arguments):
        raise ArityMismatch(literal.predicate, predicate.arity, len(literal.arguments))
    for term in literal.arguments:
        if is_variable(term):
            if term not in schema.parameter_names and not allow_scoped:
                raise ValidationError(schema.name, f"{term} is not a parameter")
        elif term not in domain.constants:
            raise ValidationError(schema.name, f"{term} is neither a variable nor a declared constant")


def validate_domain(domain: Domain) -> None:
    """Raise ValidationError on the first broken invariant"""
    if not domain.schemas:
        raise ValidationError(domain.name, "domain declares no actions")
    declared = set(domain.categories)
    for const, category in domain.constants.items():
        if category not in declared:
            raise ValidationError(const, f"unknown category {category}")
    for predicate in domain.predicates.values():
        if predicate.arity < 1:
            raise ValidationError(predicate.name, "predicates need at least one argument")
        for slot in predicate.parameter_categories:
            unknown = set(slot) - declared
            if unknown:
                raise ValidationError(predicate.name, f"unknown category {sorted(unknown)[0]}")

    for schema in domain.schemas.values():
        names = schema.parameter_names
        if len(set(names)) != len(names):
            raise ValidationError(schema.name, "duplicate parameter variable")
        for variable, slot in schema.parameters:
            if not is_variable(variable):
                raise ValidationError(schema.name, f"parameter {variable} must start with '?'")
            unknown = set(slot) - declared
            if unknown:
                raise ValidationError(schema.name, f"unknown category {sorted(unknown)[0]}")
        if not schema.effects:
            raise ValidationError(schema.name, "schema has no effects")
        for effect in schema.effects:
            _check_literal(domain, schema, effect, allow_scoped=True)
        for condition in schema.blocking_conditions:
            if not condition.resolutions:
                raise ValidationError(f"{schema.name}.{condition.name}", "resolutions must be non-empty")
            for literal in condition.trigger + condition.resolutions:
                _check_literal(domain, schema, literal, allow_scoped=False)
        if schema.repeatable and not schema.is_sensing:
            raise ValidationError(schema.name, "only schemas whose effects are all possibly_* may be repeatable")


def render_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})", "  (:categories " + " ".join(domain.categories) + ")"]
    if domain.constants:
        consts = " ".join(f"{c} - {cat}" for c, cat in domain.constants.items())
        lines.append(f"  (:constants {consts})")
    lines.append("  (:predicates")
    for predicate in domain.predicates.values():
        slots = " ".join(f"?a{i} - {category_text(cats)}" for i, cats in enumerate(predicate.parameter_categories))
        lines.append(f"    ({predicate.name} {slots})")
    lines.append("  )")
    for schema in domain.schemas.values():
        params = " ".join(f"{v} - {category_text(c)}" for v, c in schema.parameters)
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({params})")
        if schema.repeatable:
            lines.append("    :repeatable")
        lines.append(f"    :effects ({_render_literals(schema.effects)})")
        if schema.blocking_conditions:
            lines.append("    :blocked-when")
            for c in schema.blocking_conditions:
                lines.append(f"      (:condition {c.name} :trigger ({_render_literals(c.trigger)})"
                             f" :resolution ({_render_literals(c.resolutions)}))")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def _render_literals(literals) -> str:
    return " ".join(f"(({l.predicate}{''.join(' ' + a for a in l.arguments)}) {l.value.value})" for l in literals)


# =====================================================================
# PROBLEM
# =====================================================================

@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: Dict[str, str]
    known: Tuple[Literal, ...]
    goal: Tuple[Literal, ...]

    def instance_map(self, domain: Domain) -> Dict[str, str]:
        """Declared objects plus the domain's constants"""
        merged = dict(domain.constants)
        merged.update(self.objects)
        return merged


def _check_ground(domain: Domain, literal: Literal, instances: Mapping[str, str]) -> None:
    if literal.predicate not in domain.predicates:
        raise UnknownPredicate(literal.predicate)
    predicate = domain.predicates[literal.predicate]
    if predicate.arity != len(literal.arguments):
        raise ArityMismatch(literal.predicate, predicate.arity, len(literal.arguments))
    for term, slot in zip(literal.arguments, predicate.parameter_categories):
        if term not in instances:
            raise UnknownInstance(term)
        if instances[term] not in slot:
            raise ValidationError(term, f"category {instances[term]} not allowed in {literal.predicate}")


def parse_problem(text: str, domain: Domain) -> Problem:
    """Parse a problem and validate it against the domain vocabulary"""
    root = read_sexpr(text)
    _expect_keyword(root, 0, "define")
    header = _slist(_item(root, 1, "(problem NAME)"), "(problem NAME)")
    _expect_keyword(header, 0, "problem")
    name = _atom(_item(header, 1, "problem name"), "problem name")

    domain_name = domain.name
    objects: Dict[str, str] = {}
    known: List[Literal] = []
    goal: List[Literal] = []
    for node in root.items[2:]:
        section = _slist(node, "problem section")
        head = _atom(_item(section, 0, "section keyword"), "section keyword").lower()
        if head == ":domain":
            domain_name = _atom(_item(section, 1, "domain name"), "domain name")
        elif head == ":objects":
            inner = SList(section.items[1:], section.line, section.col, section.end_line, section.end_col)
            for obj, cats in _typed_list(inner):
                if len(cats) != 1:
                    _fail(section, "a single category per object")
                if obj in objects or obj in domain.constants:
                    raise ValidationError(obj, "instance declared twice")
                objects[obj] = cats[0]
        elif head == ":known":
            inner = SList(section.items[1:], section.line, section.col, section.end_line, section.end_col)
            known.extend(_literal_list(inner, CERTAIN_VALUES))
        elif head == ":goal":
            inner = SList(section.items[1:], section.line, section.col, section.end_line, section.end_col)
            goal.extend(_literal_list(inner, CERTAIN_VALUES))
        else:
            _fail(section.items[0], ":domain, :objects, :known or :goal")

    if domain_name != domain.name:
        raise ValidationError(domain_name, f"problem targets a different domain than {domain.name}")
    for obj, category in objects.items():
        if category not in domain.categories:
            raise ValidationError(obj, f"unknown category {category}")
        if not obj or any(ch.isspace() for ch in obj):
            raise ValidationError(obj, "instance ids must be non-empty without whitespace")
    if not goal:
        raise ValidationError(name, "goal must be non-empty")

    problem = Problem(name, domain_name, objects, tuple(known), tuple(goal))
    instances = problem.instance_map(domain)
    for literal in problem.known + problem.goal:
        _check_ground(domain, literal, instances)
    return problem


def render_problem(problem: Problem) -> str:
    objects = " ".join(f"{o} - {c}" for o, c in problem.objects.items())
    return (
        f"(define (problem {problem.name})\n"
        f"  (:domain {problem.domain_name})\n"
        f"  (:objects {objects})\n"
        f"  (:known {_render_literals(problem.known)})\n"
        f"  (:goal {_render_literals(problem.goal)})\n"
        ")\n"
    )


# =====================================================================
# ACTION STRINGS
# =====================================================================

def render_action(action: GroundedAction) -> str:
    return str(action)


def parse_action(text: str, domain: Domain, instances: Mapping[str, str]) -> GroundedAction:
    """Inverse of render_action: 'schema arg1 arg2' -> GroundedAction"""
    parts = text.split()
    if not parts:
        raise UnknownSchema(text)
    schema = domain.schema(parts[0])
    args = parts[1:]
    if len(args) != len(schema.parameters):
        raise ArityMismatch(schema.name, len(schema.parameters), len(args))
    for arg in args:
        if arg not in instances:
            raise UnknownInstance(arg)
    return ground(schema, dict(zip(schema.parameter_names, args)), instances)


def load_domain(path: Union[str, Path]) -> Domain:
    path = Path(path)
    domain = parse_domain(path.read_text(encoding="utf-8"))
    logger.debug(f"📖 Loaded domain {domain.name} from {path} ({len(domain.schemas)} actions)")
    return domain


def load_problem(path: Union[str, Path], domain: Domain) -> Problem:
    path = Path(path)
    problem = parse_problem(path.read_text(encoding="utf-8"), domain)
    logger.debug(f"📖 Loaded problem {problem.name} from {path}")
    return problem
