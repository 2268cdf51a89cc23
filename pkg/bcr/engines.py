"""
Selection engines: given the candidate set, pick the next action.

Every engine returns a Selection whose action is one of ctx.candidates.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from bcr.domain import Domain, GroundedAction, Literal
from bcr.errors import SelectionExhausted
from bcr.forest import ResolutionForest
from bcr.llm_client import ChatClient, ChatRequest
from bcr.prompts import SelectionContext, build_prompt, parse_selection, with_corrective_note

logger = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 3


@dataclass
class Selection:
    action: str
    rationale: Optional[str] = None
    retries_used: int = 0
    prompt: Optional[List[Dict[str, str]]] = None
    responses: List[str] = field(default_factory=list)


class SelectionEngine(Protocol):
    name: str

    def select(self, ctx: SelectionContext, rng_seed: int) -> Selection:
        ...


class RandomEngine:
    """Uniform choice over the candidates from a per-decision seeded generator"""

    name = "random"

    def select(self, ctx: SelectionContext, rng_seed: int) -> Selection:
        rng = np.random.default_rng(rng_seed)
        return Selection(ctx.candidates[int(rng.integers(len(ctx.candidates)))])


class OracleEngine:
    """
    Scripted selection driven by simulator ground truth, used as a
    deterministic test instrument. It reads the world only through preview().

    Preference order:
        1. a candidate that succeeds and resolves its parent's condition
           (or satisfies its root's goal literal)
        2. a sensing candidate that locates a goal object
        3. a non-repeatable candidate that succeeds, deepest first
        4. a candidate that would be blocked by a condition it has not had
           resolved before, deepest first
        5. a repeatable candidate that succeeds, least tried first
        6. a candidate blocked again by a condition it already had resolved
        7. a candidate the world would reject with an error
    Ties inside a rule break lexicographically.
    """

    name = "oracle"

    def __init__(self, world, forest: ResolutionForest, domain: Domain):
        self.world = world
        self.forest = forest
        self.domain = domain

    def _progress_literals(self, node_id: int) -> Tuple[Literal, ...]:
        condition = self.forest.parent_condition(node_id)
        if condition is not None:
            return condition.resolutions
        return (self.forest.node(node_id).goal,)

    def rank(self, candidates: Sequence[Tuple[int, GroundedAction]]) -> List[Tuple[int, str, int]]:
        """(rule, action text, node id) for every candidate, best first"""
        goal_objects = {a for l in self.forest.goal for a in l.arguments}
        ranked = []
        for node_id, action in candidates:
            text = str(action)
            schema = self.domain.schema(action.schema)
            result = self.world.preview(text, self._progress_literals(node_id))
            node = self.forest.node(node_id)
            depth = self.forest.depth(node_id)
            if result.success and result.checks_hold:
                key = (1, -depth, text)
            elif result.success and schema.is_sensing \
                    and goal_objects & {i.id for i in result.observation.instances}:
                key = (2, 0, text)
            elif result.blocked:
                # walking off to resolve a sibling re-blocks this one; going back is a cycle
                key = (6, -depth, text) if result.condition.name in node.resolved else (4, -depth, text)
            elif not result.success:
                key = (7, 0, text)
            elif not schema.repeatable:
                key = (3, -depth, text)
            else:
                key = (5, node.attempts, text)
            ranked.append((key, node_id))
        ranked.sort()
        return [(key[0], key[2], node_id) for key, node_id in ranked]

    def select(self, ctx: SelectionContext, rng_seed: int) -> Selection:
        allowed = set(ctx.candidates)
        pairs = [(i, a) for i, a in self.forest.candidates() if str(a) in allowed]
        if not pairs:
            return Selection(sorted(ctx.candidates)[0], rationale="no forest match")
        rule, text, _ = self.rank(pairs)[0]
        return Selection(text, rationale=f"rule {rule}")


def llm_select(ctx: SelectionContext, client: ChatClient, model: str, retry_budget: int = DEFAULT_RETRY_BUDGET,
               temperature: float = 0.0, max_tokens: Optional[int] = None) -> Selection:
    """
    Ask the model for one action, re-sending with a corrective note when the
    reply names nothing from the candidate list.

    Raises:
        SelectionExhausted: after retry_budget + 1 calls without a valid action
        TransportError: passed through from the client
    """
    if retry_budget < 0:
        raise ValueError("retry budget must be >= 0")
    prompt = build_prompt(ctx)
    messages = prompt
    responses: List[str] = []
    for attempt in range(retry_budget + 1):
        request = ChatRequest.from_messages(model, messages, temperature, max_tokens)
        text = client.chat(request).text
        responses.append(text)
        action = parse_selection(text)
        if action is not None and action in ctx.candidates:
            rationale = text.split("$$", 2)[-1].strip() or None
            return Selection(action, rationale, attempt, prompt, responses)
        logger.info(f"⚠️ Reply {attempt + 1} did not name a candidate: {action or text[:80]!r}")
        messages = with_corrective_note(prompt)
    raise SelectionExhausted(retry_budget + 1, responses[-1] if responses else None)


class LLMEngine:
    name = "llm"

    def __init__(self, client: ChatClient, model: str, retry_budget: int = DEFAULT_RETRY_BUDGET,
                 temperature: float = 0.0, max_tokens: Optional[int] = None):
        self.client = client
        self.model = model
        self.retry_budget = retry_budget
        self.temperature = temperature
        self.max_tokens = max_tokens

    def select(self, ctx: SelectionContext, rng_seed: int) -> Selection:
        return llm_select(ctx, self.client, self.model, self.retry_budget, self.temperature, self.max_tokens)
