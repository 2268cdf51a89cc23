"""
Prompt construction and response parsing for LLM-backed action selection.

A prompt is rebuilt from scratch at every decision; nothing carries over from
earlier calls. Messages appear in a fixed order:

    1. role statement (system)
    2. instructions, agent summary and domain notes
    3. previous actions
    4. completed subgoals
    5. candidate actions, each wrapped as '$$ <action> $$'
    6. remaining goals
    7. last error, only when there is one
    8. output format reminder
"""
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

SYSTEM_PROMPT = (
    "You are helping me select my next action, take your time and verify that "
    "the action you select is part of the list I provide."
)
INSTRUCTION_PROMPT = (
    "Take your time and go step by step. Think about what each action would "
    "change before you pick one."
)
FORMAT_PROMPT = (
    "Please refrain from getting stuck in action loops and provide your selected "
    "action in the format '$$ <selected action> $$'. Explain your choice after the "
    "selected action, using object names exactly as they appear in the list."
)
CORRECTIVE_NOTE = "Please only select actions in the list I provided."

_SELECTION_PATTERN = re.compile(r"\$\$(.*?)\$\$", re.DOTALL)


@dataclass
class SelectionContext:
    candidates: List[str]
    previous_actions: List[str] = field(default_factory=list)
    completed_subgoals: List[str] = field(default_factory=list)
    remaining_goals: List[str] = field(default_factory=list)
    last_error: Optional[str] = None
    agent_summary: str = ""
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "SelectionContext":
        return cls(
            candidates=list(data["candidates"]),
            previous_actions=list(data.get("previous_actions", [])),
            completed_subgoals=list(data.get("completed_subgoals", [])),
            remaining_goals=list(data.get("remaining_goals", [])),
            last_error=data.get("last_error"),
            agent_summary=data.get("agent_summary", ""),
            notes=list(data.get("notes", [])),
        )


def render_list(items: Sequence[str]) -> str:
    return "[" + ", ".join(f"'{item}'" for item in items) + "]"


def wrap_action(action: str) -> str:
    return f"$$ {action} $$"


def build_prompt(ctx: SelectionContext) -> List[Dict[str, str]]:
    """Ordered chat messages for one decision"""
    instruction = " ".join(part for part in [INSTRUCTION_PROMPT, ctx.agent_summary, *ctx.notes] if part)
    messages = [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": instruction},
        {"role": "user", "content": f"These are the actions I have taken so far: {render_list(ctx.previous_actions)}"},
        {"role": "user", "content": f"These subgoals are already completed: {render_list(ctx.completed_subgoals)}"},
        {"role": "user", "content": "Select the best action from this list: "
                                    f"{render_list([wrap_action(c) for c in ctx.candidates])}"},
        {"role": "user", "content": "The action should help me achieve these remaining goals: "
                                    f"{render_list(ctx.remaining_goals)}"},
    ]
    if ctx.last_error:
        messages.append({"role": "user", "content": f"The last attempt went wrong: {ctx.last_error}"})
    messages.append({"role": "user", "content": f"{FORMAT_PROMPT} {CORRECTIVE_NOTE}"})
    return messages


def with_corrective_note(messages: List[Dict[str, str]]) -> List[Dict[str, str]]:
    return messages + [{"role": "user", "content": CORRECTIVE_NOTE}]


def parse_selection(text: Optional[str]) -> Optional[str]:
    """Trimmed content of the first '$$ ... $$' span, or None"""
    if not text:
        return None
    match = _SELECTION_PATTERN.search(text)
    if match is None:
        return None
    action = match.group(1).strip()
    return action or None
