import argparse
import json
import logging
import sys

import config
from agent import AgentConfig, run_agent
from harness.experiment import load_experiment_config, run_experiment
from harness.metrics import optimal_nsw, record_metrics
from harness.report import build_report
from resources.core import RngSeed
from resources.envgen import KINDS, InstanceSpec, generate
from resources.errors import FairDuelError
from resources.instance_io import load_instance, save_instance
from tools.validation_tool import validate_tensor
from tools.welfare import SolverSettings

logger = logging.getLogger(__name__)

AGENT_NAMES = ["fair-etc", "fair-eps", "util-etc", "util-eps", "uniform-users"]


def cmd_gen(args: argparse.Namespace) -> int:
    spec = InstanceSpec(
        kind=args.kind,
        users=args.users,
        arms=args.arms,
        gap=args.gap,
        rho=args.rho,
        eps=args.eps,
        eps_prime=args.eps_prime,
        target_m=args.target_m,
        seed=RngSeed(args.seed, 0),
    )
    instance = generate(spec)
    report = validate_tensor(instance.tensor)
    if not report.ok:
        for message in report.messages():
            logger.error(message)
        return 1
    path = save_instance(instance, args.out)
    logger.info("Wrote %s instance to %s (winners %s)", spec.kind, path, list(instance.winners.winners))
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    instance = load_instance(args.env)
    agent_config = AgentConfig(
        kind=args.agent,
        horizon=args.horizon,
        delta_hat=args.delta_hat,
        etc_scale=args.etc_scale,
        eps_scale=args.eps_scale,
        solver=SolverSettings(max_iterations=config.FW_MAX_ITER, gap_tolerance=config.FW_GAP_TOL),
        seed=RngSeed(args.seed, 0),
        recompute_every=args.recompute_every,
        checkpoint_stride=args.checkpoint_stride,
    )
    record = run_agent(instance, agent_config, optimal_nsw(instance.scores).value)
    path = record.write_csv(args.out)
    metrics = record_metrics(record, instance.scores)
    logger.info("Wrote %d-step trace to %s", record.steps, path)
    for name, value in metrics.items():
        logger.info("%s = %.17g", name, value)
    if record.truncated:
        logger.warning("Run truncated: %s", record.truncation_reason)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    experiment = load_experiment_config(args.config)
    result = run_experiment(experiment, args.out, jobs=args.jobs)
    return 1 if result.failed else 0


def cmd_report(args: argparse.Namespace) -> int:
    for path in build_report(args.in_dir, args.out):
        logger.info("Wrote %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Fair multi-user dueling bandit simulator")
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem instance")
    gen.add_argument("--kind", choices=KINDS, required=True)
    gen.add_argument("--users", type=int, required=True)
    gen.add_argument("--arms", type=int, required=True)
    gen.add_argument("--gap", type=float, default=0.1)
    gen.add_argument("--rho", type=float, default=1.0)
    gen.add_argument("--eps", type=float, default=0.1)
    gen.add_argument("--eps-prime", type=float, default=0.01)
    gen.add_argument("--target-m", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen)

    run = sub.add_parser("run", help="run one agent on one instance")
    run.add_argument("--env", required=True)
    run.add_argument("--agent", choices=AGENT_NAMES, required=True)
    run.add_argument("--horizon", type=int, required=True)
    run.add_argument("--delta-hat", type=float, default=0.0025)
    run.add_argument("--etc-scale", type=float, default=0.25)
    run.add_argument("--eps-scale", type=float, default=0.1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--recompute-every", type=int, default=1)
    run.add_argument("--checkpoint-stride", type=int, default=config.DEFAULT_CHECKPOINT_STRIDE)
    run.add_argument("--out", required=True)
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="run an experiment grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--jobs", type=int, default=config.DEFAULT_JOBS)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", help="summarize a sweep directory")
    report.add_argument("--in", dest="in_dir", required=True)
    report.add_argument("--out", required=True)
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=config.LOG_FORMAT)
    try:
        return args.handler(args)
    except (FairDuelError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        message = str(exc)
        print(message if message.startswith("Error:") else f"Error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
