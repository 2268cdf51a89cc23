"""
Resolution forest.

Roots are actions that achieve goal literals. When a node is blocked it grows
one child per resolution action for the blocking condition; the leaves of all
trees form the candidate set. Successful executions prune the tree:

    (a) a root whose goal literal now holds removes its whole tree
    (b) a node whose parent's condition is now resolved removes itself and
        all of its siblings, and the parent becomes a candidate again
    (c) otherwise a repeatable node stays a leaf and a non-repeatable one is
        removed on its own

The forest is owned by a single executor and is updated in place.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

from bcr.domain import (
    AchieverMode,
    BeliefState,
    BlockingCondition,
    Domain,
    GroundedAction,
    Literal,
    TruthValue,
    achievers,
    condition_resolved,
    holds,
)
from bcr.errors import NoAchiever, NotALeaf

logger = logging.getLogger(__name__)


class NodeStatus(str, Enum):
    FRESH = "Fresh"
    BLOCKED = "Blocked"


@dataclass
class Node:
    id: int
    action: GroundedAction
    parent: Optional[int] = None
    children: List[int] = field(default_factory=list)
    status: NodeStatus = NodeStatus.FRESH
    condition: Optional[BlockingCondition] = None
    attempts: int = 0
    goal: Optional[Literal] = None
    # children already tried under last_condition
    exhausted: Set[str] = field(default_factory=set)
    last_condition: Optional[str] = None
    # conditions that blocked this node once and were later resolved
    resolved: Set[str] = field(default_factory=set)

    @property
    def is_leaf(self) -> bool:
        return not self.children


def _root_achievers(literal: Literal, domain: Domain, state: BeliefState) -> List[GroundedAction]:
    found = achievers(literal, domain, state.instances, AchieverMode.CERTAIN_ONLY)
    if not found:
        found = achievers(literal, domain, state.instances, AchieverMode.INCLUDE_POSSIBLE)
    return found


class ResolutionForest:
    def __init__(self, goal: Iterable[Literal]):
        self.goal: Tuple[Literal, ...] = tuple(goal)
        self.roots: List[int] = []
        self.nodes: Dict[int, Node] = {}
        self.dead_goals: Set[Literal] = set()
        # root actions that were dropped without achieving their goal
        self.root_exhausted: Dict[Literal, Set[str]] = {}
        self._next_id = 1

    # -----------------------------------------------------------------
    # construction
    # -----------------------------------------------------------------

    @classmethod
    def init(cls, goal: Iterable[Literal], domain: Domain, state: BeliefState) -> "ResolutionForest":
        """
        One root per unsatisfied goal literal and achiever.
        Certain achievers are preferred; possible ones are used only when no certain one exists.
        """
        forest = cls(goal)
        if not forest.goal:
            raise ValueError("goal must be non-empty")
        for literal in forest.goal:
            if holds(state, literal) is TruthValue.TRUE:
                continue
            found = _root_achievers(literal, domain, state)
            if not found:
                raise NoAchiever(str(literal))
            for action in found:
                forest._add_root(action, literal)
        logger.debug(f"🌱 Forest initialised with {len(forest.roots)} roots")
        return forest

    def _new_node(self, action: GroundedAction, parent: Optional[int], goal: Optional[Literal] = None) -> Node:
        node = Node(self._next_id, action, parent, goal=goal)
        self.nodes[node.id] = node
        self._next_id += 1
        return node

    def _add_root(self, action: GroundedAction, literal: Literal) -> Node:
        node = self._new_node(action, None, literal)
        self.roots.append(node.id)
        return node

    # -----------------------------------------------------------------
    # queries
    # -----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def _walk(self, node_id: int):
        yield node_id
        for child in self.nodes[node_id].children:
            yield from self._walk(child)

    def candidates(self) -> List[Tuple[int, GroundedAction]]:
        """Leaves in depth-first order over roots, children in creation order"""
        return [(i, self.nodes[i].action)
                for root in self.roots for i in self._walk(root) if self.nodes[i].is_leaf]

    def ancestors(self, node_id: int) -> List[Node]:
        chain = []
        parent = self.nodes[node_id].parent
        while parent is not None:
            chain.append(self.nodes[parent])
            parent = self.nodes[parent].parent
        return chain

    def depth(self, node_id: int) -> int:
        return len(self.ancestors(node_id))

    def root_of(self, node_id: int) -> Node:
        chain = self.ancestors(node_id)
        return chain[-1] if chain else self.nodes[node_id]

    def parent_condition(self, node_id: int) -> Optional[BlockingCondition]:
        parent = self.nodes[node_id].parent
        return self.nodes[parent].condition if parent is not None else None

    def paths(self) -> List[List[Node]]:
        """Every root-to-leaf path"""
        out = []
        for leaf_id, _ in self.candidates():
            out.append(list(reversed(self.ancestors(leaf_id))) + [self.nodes[leaf_id]])
        return out

    def goals_with_trees(self) -> Set[Literal]:
        return {self.nodes[r].goal for r in self.roots}

    # -----------------------------------------------------------------
    # removal
    # -----------------------------------------------------------------

    def _drop_subtree(self, node_id: int) -> None:
        for i in list(self._walk(node_id)):
            del self.nodes[i]

    def _remove(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.parent is None:
            self.roots.remove(node_id)
        else:
            self.nodes[node.parent].children.remove(node_id)
        self._drop_subtree(node_id)

    def _remove_tree_of(self, literal: Literal) -> None:
        for root in [r for r in self.roots if self.nodes[r].goal == literal]:
            self._remove(root)

    def _retire_root(self, node_id: int) -> None:
        node = self.nodes[node_id]
        self.root_exhausted.setdefault(node.goal, set()).add(str(node.action))
        self._remove(node_id)

    def _kill(self, node_id: int) -> None:
        """Dead end: remove the node, and its parent as well when no alternative is left"""
        node = self.nodes[node_id]
        parent = node.parent
        if parent is None:
            literal = node.goal
            self._retire_root(node_id)
            if literal is not None and literal not in self.goals_with_trees():
                logger.warning(f"⚠️ Every achiever of goal {literal} is dead")
                self.dead_goals.add(literal)
            return
        self.nodes[parent].exhausted.add(str(node.action))
        self._remove(node_id)
        if not self.nodes[parent].children:
            self._kill(parent)

    def _reset_to_candidate(self, node: Node, resolved: bool = True) -> None:
        for child in list(node.children):
            self._remove(child)
        if resolved and node.condition is not None:
            node.resolved.add(node.condition.name)
        node.status = NodeStatus.FRESH
        node.condition = None
        if resolved:
            node.exhausted.clear()
            node.last_condition = None

    # -----------------------------------------------------------------
    # updates
    # -----------------------------------------------------------------

    def _resolution_children(self, node: Node, domain: Domain, state: BeliefState) -> List[GroundedAction]:
        condition = node.condition
        pending = [r for r in condition.resolutions if holds(state, r) is not TruthValue.TRUE]
        forbidden = {str(node.action)} | {str(a.action) for a in self.ancestors(node.id)}
        forbidden |= node.exhausted
        forbidden |= {str(self.nodes[c].action) for c in node.children}
        found: Dict[str, GroundedAction] = {}
        for literal in pending or condition.resolutions:
            for action in achievers(literal, domain, state.instances, AchieverMode.INCLUDE_POSSIBLE):
                text = str(action)
                if text not in forbidden:
                    found.setdefault(text, action)
        return list(found.values())

    def on_blocked(self, node_id: int, condition: BlockingCondition, domain: Domain,
                   state: BeliefState) -> "ResolutionForest":
        node = self.nodes.get(node_id)
        if node is None or not node.is_leaf:
            raise NotALeaf(node_id)
        node.attempts += 1
        if node.last_condition != condition.name:
            node.exhausted.clear()
            node.last_condition = condition.name
        node.status = NodeStatus.BLOCKED
        node.condition = condition

        children = self._resolution_children(node, domain, state)
        if not children:
            logger.info(f"⚠️ No resolution for {condition.name} on '{node.action}', pruning")
            self._kill(node_id)
            return self
        for action in children:
            node.children.append(self._new_node(action, node_id).id)
        logger.debug(f"🌿 '{node.action}' blocked by {condition.name}: {len(children)} children")
        return self

    def on_success(self, node_id: int, domain: Domain, state: BeliefState) -> "ResolutionForest":
        node = self.nodes.get(node_id)
        if node is None or not node.is_leaf:
            raise NotALeaf(node_id)
        node.attempts += 1
        schema = domain.schema(node.action.schema)

        if node.parent is None:
            if holds(state, node.goal) is TruthValue.TRUE:
                self._remove_tree_of(node.goal)
            elif not schema.repeatable:
                self._retire_root(node_id)
            return self

        parent = self.nodes[node.parent]
        if condition_resolved(state, parent.condition):
            self._reset_to_candidate(parent)
        elif not schema.repeatable:
            parent.exhausted.add(str(node.action))
            self._remove(node_id)
            if not parent.children:
                self._reset_to_candidate(parent, resolved=False)
        return self

    def on_error(self, node_id: int) -> "ResolutionForest":
        """The world rejected the action outright; drop it like an unproductive sibling"""
        node = self.nodes.get(node_id)
        if node is None or not node.is_leaf:
            raise NotALeaf(node_id)
        node.attempts += 1
        if node.parent is None:
            self._retire_root(node_id)
            return self
        parent = self.nodes[node.parent]
        parent.exhausted.add(str(node.action))
        self._remove(node_id)
        if not parent.children:
            self._reset_to_candidate(parent, resolved=False)
        return self

    def refresh(self, domain: Domain, state: BeliefState) -> "ResolutionForest":
        """
        Bring the forest in line with a new belief: prune satisfied goals, reopen
        nodes whose condition got resolved elsewhere, add children for newly
        known instances and re-seed goals that lost their tree.

        Re-seeding skips root actions already dropped for the same goal; a goal
        with no untried achiever left is dead.
        """
        for literal in {self.nodes[r].goal for r in self.roots}:
            if holds(state, literal) is TruthValue.TRUE:
                self._remove_tree_of(literal)

        for node_id in [i for root in list(self.roots) for i in self._walk(root)]:
            node = self.nodes.get(node_id)
            if node is None or node.status is not NodeStatus.BLOCKED:
                continue
            if condition_resolved(state, node.condition):
                self._reset_to_candidate(node)
                continue
            for action in self._resolution_children(node, domain, state):
                node.children.append(self._new_node(action, node_id).id)

        with_trees = self.goals_with_trees()
        for literal in self.goal:
            if literal in with_trees or literal in self.dead_goals:
                continue
            if holds(state, literal) is TruthValue.TRUE:
                continue
            tried = self.root_exhausted.get(literal, set())
            found = [a for a in _root_achievers(literal, domain, state) if str(a) not in tried]
            if not found:
                logger.warning(f"⚠️ No untried achiever left for goal {literal}")
                self.dead_goals.add(literal)
                continue
            for action in found:
                self._add_root(action, literal)
        return self

    # -----------------------------------------------------------------
    # serialization
    # -----------------------------------------------------------------

    def _node_json(self, node_id: int) -> Dict:
        node = self.nodes[node_id]
        data = {
            "id": node.id,
            "action": str(node.action),
            "status": node.status.value,
            "condition": node.condition.name if node.condition else None,
            "attempts": node.attempts,
        }
        if node.goal is not None:
            data["goal"] = str(node.goal)
        data["children"] = [self._node_json(c) for c in node.children]
        return data

    def to_json(self) -> List[Dict]:
        return [self._node_json(r) for r in self.roots]


def render_snapshot(snapshot: List[Dict]) -> str:
    """Indented text view of a serialized forest"""
    lines = []

    def emit(node: Dict, depth: int) -> None:
        status = node["status"] if not node.get("condition") else f"{node['status']}:{node['condition']}"
        goal = f"  -> {node['goal']}" if node.get("goal") else ""
        lines.append(f"{'  ' * depth}[{node['id']}] {node['action']} ({status}){goal}")
        for child in node["children"]:
            emit(child, depth + 1)

    for root in snapshot:
        emit(root, 0)
    return "\n".join(lines) if lines else "(empty forest)"
