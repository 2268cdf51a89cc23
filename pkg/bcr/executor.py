"""
Trial executor: the select, execute, update loop over one simulated episode.

Each decision refreshes the resolution forest against the belief, offers its
leaves to a selection engine, executes the chosen action in the world and
feeds the outcome back into the forest. Every step and a closing trailer are
written as JSON lines (schema bcr-log/v1).
"""
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from bcr.config import Settings
from bcr.domain import BeliefState, Domain, Literal, Observation, TruthValue, apply_observation, holds
from bcr.engines import DEFAULT_RETRY_BUDGET, LLMEngine, OracleEngine, RandomEngine, Selection
from bcr.errors import BCRError, ConfigError, NoAchiever, SelectionExhausted, TransportError
from bcr.forest import ResolutionForest
from bcr.llm_client import ChatClient
from bcr.parser import Problem, load_domain
from bcr.prompts import SelectionContext

logger = logging.getLogger(__name__)

LOG_SCHEMA = "bcr-log/v1"
BCR_ENGINES = ("oracle", "random", "llm")
BASELINE_ENGINES = ("ffreplan", "ffreplan-limited")
ENGINES = BCR_ENGINES + BASELINE_ENGINES
CLOCKS = ("logical", "wall")
LOOP_THRESHOLD = 3

SUCCESS = "Success"
BUDGET_EXHAUSTED = "BudgetExhausted"
DEAD_END = "DeadEnd"
ENGINE_EXHAUSTED = "EngineExhausted"
UNSOLVABLE = "Unsolvable"


@dataclass
class TrialConfig:
    task: str
    engine: str
    seed: int
    max_actions: int = 100
    retry_budget: int = DEFAULT_RETRY_BUDGET
    llm_endpoint: Optional[str] = None
    llm_model: Optional[str] = None
    temperature: float = 0.0
    clock: Optional[str] = None
    domain_path: Optional[str] = None

    def __post_init__(self):
        if self.max_actions < 1:
            raise ConfigError(f"max_actions must be >= 1, got {self.max_actions}")
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}, expected one of {', '.join(ENGINES)}")
        if self.retry_budget < 0:
            raise ConfigError("retry budget must be >= 0")
        if self.clock is None:
            self.clock = "wall" if self.engine == "llm" else "logical"
        if self.clock not in CLOCKS:
            raise ConfigError(f"unknown clock {self.clock!r}")

    @property
    def condition(self) -> str:
        return self.engine

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrialRecord:
    config: TrialConfig
    steps: List[Dict] = field(default_factory=list)
    result: str = BUDGET_EXHAUSTED
    runtime: float = 0.0
    loop_detected: bool = False
    # candidate count per decision, or nodes generated per planning episode for baselines
    considered: List[int] = field(default_factory=list)
    episodes: List[Dict] = field(default_factory=list)
    dead_goals: List[str] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.result == SUCCESS

    def trailer(self) -> Dict:
        return {
            "type": "trailer",
            "schema": LOG_SCHEMA,
            "config": self.config.to_dict(),
            "result": self.result,
            "runtime_s": round(self.runtime, 6),
            "steps": len(self.steps),
            "loop_detected": self.loop_detected,
            "considered": self.considered,
            "episodes": self.episodes,
            "dead_goals": self.dead_goals,
        }


class TrialClock:
    """Wall time, or one logical second per executed action"""

    def __init__(self, mode: str):
        self.mode = mode
        self.started = time.perf_counter()
        self.ticks = 0

    def tick(self) -> None:
        self.ticks += 1

    def elapsed(self) -> float:
        if self.mode == "logical":
            return float(self.ticks)
        return time.perf_counter() - self.started

    def since(self, mark: float) -> float:
        return self.elapsed() - mark


# =====================================================================
# LOGS
# =====================================================================

def write_log(record: TrialRecord, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for step in record.steps:
            f.write(json.dumps(step, ensure_ascii=False) + "\n")
        f.write(json.dumps(record.trailer(), ensure_ascii=False) + "\n")
    return path


def read_log(path: Union[str, Path]) -> Tuple[List[Dict], Dict]:
    """Step lines and trailer of a trial log"""
    steps, trailer = [], None
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry.get("schema") != LOG_SCHEMA:
                raise BCRError(f"{path}: unsupported log schema {entry.get('schema')!r}")
            if entry["type"] == "trailer":
                trailer = entry
            else:
                steps.append(entry)
    if trailer is None:
        raise BCRError(f"{path}: missing trailer line")
    return steps, trailer


# =====================================================================
# BELIEF HELPERS
# =====================================================================

def initial_belief(problem: Problem, domain: Domain, observation: Observation) -> BeliefState:
    entries = {l.key: l.value.certain for l in problem.known}
    return apply_observation(BeliefState(entries, problem.instance_map(domain)), observation)


def observation_delta(before: BeliefState, after: BeliefState) -> Dict:
    changed = [str(Literal(p, args, v)) for (p, args), v in sorted(after.entries.items())
               if before.value_of((p, args)) != v]
    added = sorted(set(after.instances) - set(before.instances))
    return {"literals": changed, "instances": added}


def summarize_agent(belief: BeliefState) -> str:
    """One-line description of where the agent is and what it holds"""
    parts = []
    rooms = [args[0] for (p, args), v in sorted(belief.entries.items()) if p == "atRoom" and v is TruthValue.TRUE]
    if rooms:
        parts.append(f"I am in the {rooms[0]}.")
    held = [args[0] for (p, args), v in sorted(belief.entries.items())
            if p in ("holding", "isHolding") and v is TruthValue.TRUE]
    parts.append(f"I am holding {held[0]}." if held else "I am not holding anything.")
    return " ".join(parts)


# =====================================================================
# BCR TRIAL
# =====================================================================

def _make_engine(cfg: TrialConfig, world, forest: ResolutionForest, domain: Domain,
                 client: Optional[ChatClient], settings: Optional[Settings]):
    if cfg.engine == "oracle":
        return OracleEngine(world, forest, domain)
    if cfg.engine == "random":
        return RandomEngine()
    if client is None:
        settings = (settings or Settings()).with_overrides(llm_endpoint=cfg.llm_endpoint, llm_model=cfg.llm_model)
        client = ChatClient.from_settings(settings, seed=cfg.seed)
    model = cfg.llm_model or (settings.llm_model if settings else Settings().llm_model)
    return LLMEngine(client, model, cfg.retry_budget, cfg.temperature)


def _kitchen_world(cfg: TrialConfig):
    from bcr.kitchen_sim import KITCHEN_NOTES, KitchenSim, kitchen_domain, load_task

    domain = load_domain(cfg.domain_path) if cfg.domain_path else kitchen_domain()
    problem = load_task(cfg.task, domain)
    world, observation = KitchenSim.reset(problem, cfg.seed, domain)
    return world, observation, domain, problem, list(KITCHEN_NOTES)


def run_trial(cfg: TrialConfig, client: Optional[ChatClient] = None, settings: Optional[Settings] = None,
              world=None, domain: Optional[Domain] = None, problem: Optional[Problem] = None,
              observation: Optional[Observation] = None, notes: Optional[List[str]] = None) -> TrialRecord:
    """
    Run one trial. Baseline engines are delegated to the replanner.

    Args:
        cfg: trial configuration
        client: chat client for the llm engine; built from settings when omitted
        world: any object with execute/preview/goal_satisfied; the kitchen simulator by default
        domain, problem, observation: must accompany a custom world
    """
    if cfg.engine in BASELINE_ENGINES:
        from bcr.replan import replan_execute

        return replan_execute(cfg)

    if world is None:
        world, observation, domain, problem, notes = _kitchen_world(cfg)
    notes = list(notes or [])
    record = TrialRecord(cfg)
    clock = TrialClock(cfg.clock)
    goal = list(problem.goal)
    belief = initial_belief(problem, domain, observation or Observation())

    try:
        forest = ResolutionForest.init(goal, domain, belief)
    except NoAchiever as e:
        logger.error(f"❌ {cfg.task} seed={cfg.seed}: {e}")
        record.result = DEAD_END
        record.dead_goals = [str(e)]
        return record

    engine = _make_engine(cfg, world, forest, domain, client, settings)
    fallback = OracleEngine(world, forest, domain) if cfg.engine == "llm" else None
    history: List[str] = []
    completed: List[str] = []
    last_error: Optional[str] = None
    seen: Counter = Counter()

    while True:
        forest.refresh(domain, belief)
        belief_goal = all(holds(belief, l) is TruthValue.TRUE for l in goal)
        for literal in goal:
            if holds(belief, literal) is TruthValue.TRUE and str(literal) not in completed:
                completed.append(str(literal))

        if world.goal_satisfied(goal):
            record.result = SUCCESS
            break
        if len(record.steps) >= cfg.max_actions:
            record.result = BUDGET_EXHAUSTED
            break
        candidates = forest.candidates()
        if not candidates:
            record.result = DEAD_END
            break

        ctx = SelectionContext(
            candidates=[str(a) for _, a in candidates],
            previous_actions=list(history),
            completed_subgoals=list(completed),
            remaining_goals=[str(l) for l in goal if holds(belief, l) is not TruthValue.TRUE],
            last_error=last_error,
            agent_summary=summarize_agent(belief),
            notes=notes,
        )
        snapshot = forest.to_json()
        mark = clock.elapsed()
        used_fallback = False
        try:
            selection = engine.select(ctx, rng_seed=cfg.seed * 1_000_003 + len(record.steps))
        except SelectionExhausted as e:
            logger.warning(f"⚠️ Step {len(record.steps)}: {e}, falling back to the oracle")
            selection = fallback.select(ctx, 0)
            selection.retries_used = e.attempts - 1
            used_fallback = True
        except TransportError as e:
            logger.error(f"❌ {cfg.task} seed={cfg.seed}: transport failure {e}")
            record.result = ENGINE_EXHAUSTED
            break

        node_id = next(i for i, a in candidates if str(a) == selection.action)
        digest = belief.digest()
        result = world.execute(selection.action)
        clock.tick()
        before = belief
        belief = apply_observation(belief, result.observation)

        if result.blocked:
            forest.on_blocked(node_id, result.condition, domain, belief)
            last_error = result.message
        elif result.success:
            condition = forest.parent_condition(node_id)
            forest.on_success(node_id, domain, belief)
            if condition is not None and all(holds(belief, r) is TruthValue.TRUE for r in condition.resolutions):
                completed.extend(str(r) for r in condition.resolutions if str(r) not in completed)
            last_error = None
        else:
            forest.on_error(node_id)
            last_error = result.message

        history.append(selection.action)
        seen[(digest, selection.action)] += 1
        if seen[(digest, selection.action)] >= LOOP_THRESHOLD and not record.loop_detected:
            logger.info(f"⚠️ {cfg.task} seed={cfg.seed}: loop on '{selection.action}'")
            record.loop_detected = True
        record.considered.append(len(candidates))
        record.steps.append(_step_entry(len(record.steps), ctx, snapshot, selection, used_fallback,
                                        result, observation_delta(before, belief), belief_goal,
                                        clock.since(mark)))

    record.runtime = clock.elapsed()
    record.dead_goals = sorted(str(l) for l in forest.dead_goals)
    logger.debug(f"📊 {cfg.task}/{cfg.engine} seed={cfg.seed}: {record.result} in {len(record.steps)} steps")
    return record


def _step_entry(index: int, ctx: SelectionContext, snapshot: List[Dict], selection: Selection, used_fallback: bool,
                result, delta: Dict, belief_goal: bool, elapsed: float) -> Dict:
    return {
        "type": "step",
        "schema": LOG_SCHEMA,
        "step": index,
        "candidate_count": len(ctx.candidates),
        "context": ctx.to_dict(),
        "forest": snapshot,
        "selected": selection.action,
        "rationale": selection.rationale,
        "retries_used": selection.retries_used,
        "fallback": used_fallback,
        "prompt": selection.prompt,
        "responses": selection.responses,
        "outcome": result.outcome,
        "condition": result.condition.to_dict() if result.condition else None,
        "message": result.message,
        "observation": delta,
        "belief_goal": belief_goal,
        "elapsed_s": round(elapsed, 6),
    }


def main():
    import argparse

    from bcr.config import setup_logging

    parser = argparse.ArgumentParser(description="Run a single BCR trial")
    parser.add_argument("--task", default="apple")
    parser.add_argument("--engine", default="oracle", choices=ENGINES)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    setup_logging("INFO")
    record = run_trial(TrialConfig(args.task, args.engine, args.seed))
    logger.info(f"✅ {record.result} after {len(record.steps)} actions: {[s['selected'] for s in record.steps]}")


if __name__ == "__main__":
    main()
