"""
Command line entry point.

    bcr run --task all --engine oracle --trials 50 --seed 0 --out out
    bcr replay --log out/logs/apple_llm_3.jsonl
"""
import argparse
import logging
import sys
from typing import List, Optional

from bcr.config import load_settings, setup_logging
from bcr.errors import BCRError
from bcr.executor import ENGINES, read_log
from bcr.forest import render_snapshot
from bcr.harness import SuiteConfig, run_suite
from bcr.kitchen_sim import TASK_NAMES
from bcr.prompts import SelectionContext, build_prompt

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcr", description="Blocking-condition resolution trials")
    parser.add_argument("--env-file", default=None, help="optional .env file with BCR_* settings")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a trial suite and write logs and metrics")
    run.add_argument("--domain", default=None, help="kitchen domain file (defaults to domains/kitchen.bcr)")
    run.add_argument("--task", default="all", help=f"one of {', '.join(TASK_NAMES)} or 'all'")
    run.add_argument("--engine", action="append", choices=ENGINES,
                     help="selection engine or baseline; repeat for several conditions")
    run.add_argument("--trials", type=int, default=50)
    run.add_argument("--seed", type=int, default=0, help="base seed; trial i uses seed + i")
    run.add_argument("--max-actions", type=int, default=100)
    run.add_argument("--parallel", type=int, default=None)
    run.add_argument("--out", default="out")
    run.add_argument("--clock", choices=("logical", "wall"), default=None)
    run.add_argument("--llm-endpoint", default=None)
    run.add_argument("--llm-model", default=None)
    run.add_argument("--retry-budget", type=int, default=3)
    run.add_argument("--temperature", type=float, default=0.0)

    replay = sub.add_parser("replay", help="re-render prompts and forest snapshots from a trial log")
    replay.add_argument("--log", required=True)
    replay.add_argument("--step", type=int, default=None, help="only this step")
    return parser


def cmd_run(args, settings) -> int:
    tasks = list(TASK_NAMES) if args.task == "all" else [t.strip() for t in args.task.split(",")]
    suite = SuiteConfig(
        tasks=tasks,
        conditions=args.engine or ["oracle"],
        trials=args.trials,
        base_seed=args.seed,
        parallel=args.parallel,
        out_dir=args.out,
        max_actions=args.max_actions,
        retry_budget=args.retry_budget,
        temperature=args.temperature,
        llm_endpoint=args.llm_endpoint,
        llm_model=args.llm_model,
        clock=args.clock,
        domain_path=args.domain,
    )
    _, completed = run_suite(suite, settings)
    return 0 if completed else 1


def cmd_replay(args) -> int:
    steps, trailer = read_log(args.log)
    config = trailer["config"]
    print("=" * 80)
    print(f"📖 {config['task']} / {config['engine']} seed={config['seed']}: {trailer['result']} "
          f"after {trailer['steps']} actions")
    print("=" * 80)
    for step in steps:
        if args.step is not None and step["step"] != args.step:
            continue
        print(f"\n--- step {step['step']}: {step['selected']} -> {step['outcome']}")
        if "context" not in step:
            # baseline steps carry no forest
            continue
        print(render_snapshot(step["forest"]))
        for message in build_prompt(SelectionContext.from_dict(step["context"])):
            print(f"[{message['role']}] {message['content']}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = load_settings(args.env_file)
    setup_logging(args.log_level or settings.log_level, secret=settings.api_key)
    try:
        if args.command == "run":
            return cmd_run(args, settings)
        return cmd_replay(args)
    except BCRError as e:
        logger.error(f"❌ {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
