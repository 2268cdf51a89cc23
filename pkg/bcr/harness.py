"""
Suite runner: trials over tasks x conditions x seeds, per-trial JSONL logs,
and the aggregated metrics table (metrics.csv plus a rendered table.txt).
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from bcr.config import Settings
from bcr.engines import DEFAULT_RETRY_BUDGET
from bcr.errors import ConfigError
from bcr.executor import ENGINES, TrialConfig, TrialRecord, read_log, run_trial, write_log
from bcr.kitchen_sim import TASK_NAMES

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "task", "condition", "trials", "successes",
    "mean_runtime_s", "sd_runtime_s", "mean_considered", "sd_considered", "loops_detected",
]
TRIAL_FAILED = "Failed"
MAX_DEFAULT_PARALLEL = 8


@dataclass
class SuiteConfig:
    tasks: List[str]
    conditions: List[str]
    trials: int = 50
    base_seed: int = 0
    parallel: Optional[int] = None
    out_dir: str = "out"
    max_actions: int = 100
    retry_budget: int = DEFAULT_RETRY_BUDGET
    temperature: float = 0.0
    llm_endpoint: Optional[str] = None
    llm_model: Optional[str] = None
    clock: Optional[str] = None
    domain_path: Optional[str] = None

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("at least one task is required")
        unknown = [t for t in self.tasks if t not in TASK_NAMES]
        if unknown:
            raise ConfigError(f"unknown task(s): {', '.join(unknown)}")
        bad = [c for c in self.conditions if c not in ENGINES]
        if not self.conditions or bad:
            raise ConfigError(f"unknown condition(s): {', '.join(bad) or '(none given)'}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.parallel is None:
            self.parallel = 1 if "llm" in self.conditions else min(os.cpu_count() or 1, MAX_DEFAULT_PARALLEL)
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")

    def trial_configs(self) -> List[TrialConfig]:
        """Trial i of every (task, condition) gets seed base_seed + i"""
        return [
            TrialConfig(task, condition, self.base_seed + i, self.max_actions, self.retry_budget,
                        self.llm_endpoint, self.llm_model, self.temperature, self.clock, self.domain_path)
            for task in self.tasks for condition in self.conditions for i in range(self.trials)
        ]


def log_name(cfg: TrialConfig) -> str:
    return f"{cfg.task}_{cfg.condition}_{cfg.seed}.jsonl"


# =====================================================================
# AGGREGATION
# =====================================================================

def _trial_row(trailer: Dict) -> Dict:
    config = trailer["config"]
    considered = trailer.get("considered") or []
    return {
        "task": config["task"],
        "condition": config["engine"],
        "success": trailer["result"] == "Success",
        "runtime": float(trailer["runtime_s"]),
        "considered": float(np.mean(considered)) if considered else np.nan,
        "loop": bool(trailer.get("loop_detected")),
    }


def aggregate(trailers: Iterable[Dict]) -> pd.DataFrame:
    """
    Fold trial trailers into one row per (task, condition).
    Standard deviations use ddof=1 and stay empty for single-trial groups.
    """
    rows = [_trial_row(t) for t in trailers]
    if not rows:
        return pd.DataFrame(columns=METRIC_COLUMNS)
    trials = pd.DataFrame(rows)
    grouped = trials.groupby(["task", "condition"], sort=True)
    table = grouped.agg(
        trials=("success", "size"),
        successes=("success", "sum"),
        mean_runtime_s=("runtime", "mean"),
        sd_runtime_s=("runtime", lambda s: s.std(ddof=1)),
        mean_considered=("considered", "mean"),
        sd_considered=("considered", lambda s: s.std(ddof=1)),
        loops_detected=("loop", "sum"),
    ).reset_index()
    table[["trials", "successes", "loops_detected"]] = table[["trials", "successes", "loops_detected"]].astype(int)
    return table[METRIC_COLUMNS]


def aggregate_logs(log_dir: Path) -> pd.DataFrame:
    return aggregate(read_log(path)[1] for path in sorted(Path(log_dir).glob("*.jsonl")))


def render_table(metrics: pd.DataFrame) -> str:
    def pm(mean, sd) -> str:
        if pd.isna(mean):
            return "-"
        return f"{mean:.2f}" if pd.isna(sd) else f"{mean:.2f} ± {sd:.2f}"

    view = pd.DataFrame({
        "task": metrics["task"],
        "condition": metrics["condition"],
        "success": [f"{s}/{t}" for s, t in zip(metrics["successes"], metrics["trials"])],
        "runtime_s": [pm(m, s) for m, s in zip(metrics["mean_runtime_s"], metrics["sd_runtime_s"])],
        "considered": [pm(m, s) for m, s in zip(metrics["mean_considered"], metrics["sd_considered"])],
        "loops": metrics["loops_detected"],
    })
    return view.to_string(index=False) + "\n"


def emit_reports(records: Sequence[TrialRecord], out_dir: str) -> pd.DataFrame:
    """
    Write one JSONL log per trial, then metrics.csv and table.txt computed
    from those logs alone.
    """
    if not records:
        raise ConfigError("no trial records to report")
    out = Path(out_dir)
    log_dir = out / "logs"
    for record in sorted(records, key=lambda r: (r.config.task, r.config.condition, r.config.seed)):
        write_log(record, log_dir / log_name(record.config))

    wanted = {log_name(r.config) for r in records}
    metrics = aggregate(read_log(log_dir / name)[1] for name in sorted(wanted))
    metrics.to_csv(out / "metrics.csv", index=False, float_format="%.6f", na_rep="", lineterminator="\n")
    (out / "table.txt").write_text(render_table(metrics), encoding="utf-8")
    logger.info(f"💾 Reports written to {out}")
    return metrics


# =====================================================================
# SUITE
# =====================================================================

TrialRunner = Callable[[TrialConfig], TrialRecord]


def _safe_run(cfg: TrialConfig, runner: TrialRunner) -> Tuple[TrialRecord, bool]:
    try:
        return runner(cfg), True
    except Exception as e:
        logger.error(f"❌ {cfg.task}/{cfg.condition} seed={cfg.seed} crashed: {e}")
        return TrialRecord(cfg, result=TRIAL_FAILED), False


def run_suite(suite: SuiteConfig, settings: Optional[Settings] = None,
              runner: Optional[TrialRunner] = None) -> Tuple[pd.DataFrame, bool]:
    """
    Run every trial of the suite and write the reports.

    Returns:
        (metrics table, whether every trial completed without crashing)
    """
    runner = runner or (lambda cfg: run_trial(cfg, settings=settings))
    configs = suite.trial_configs()
    logger.info(f"{'=' * 80}")
    logger.info(f"🚀 Running {len(configs)} trials: tasks={suite.tasks} conditions={suite.conditions} "
                f"K={suite.parallel}")
    logger.info(f"{'=' * 80}")

    records: List[TrialRecord] = []
    completed = True
    with ThreadPoolExecutor(max_workers=suite.parallel) as pool:
        futures = {pool.submit(_safe_run, cfg, runner): cfg for cfg in configs}
        for future in as_completed(futures):
            record, ok = future.result()
            completed = completed and ok
            records.append(record)
            cfg = futures[future]
            logger.debug(f"✅ {cfg.task}/{cfg.condition} seed={cfg.seed}: {record.result}")

    metrics = emit_reports(records, suite.out_dir)
    logger.info(f"{'=' * 80}")
    logger.info("📊 SUITE SUMMARY")
    logger.info(f"{'=' * 80}")
    for line in render_table(metrics).splitlines():
        logger.info(line)
    return metrics, completed
