#!/usr/bin/env python3
"""
Borel-Cantelli Experiment Harness
Command-line front for series classification, Markov event chains, the F^alpha scheme and concomitants
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from borel_cantelli.errors import BorelCantelliError, ConfigError  # noqa: E402
from harness.config import ExperimentConfig, load_config  # noqa: E402
from harness.emitter import emit  # noqa: E402
from harness.runner import RunResult, run_replications  # noqa: E402

# Load .env file automatically
load_dotenv()

logger = logging.getLogger("bc_harness")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

COMMAND_SCENARIOS = {
    "classify-series": "series",
    "markov-tail": "markov_chain",
    "falpha-maxima": "falpha_maxima",
    "falpha-newcomer": "falpha_newcomer",
    "concomitant": "concomitant",
}


def setup_logging(level: str) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv("BC_LOG_FILE")
    if log_file:
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def add_run_flags(parser: argparse.ArgumentParser, horizon: int, reps: int) -> None:
    parser.add_argument('--horizon', type=int, default=horizon, help='Horizon T')
    parser.add_argument('--reps', type=int, default=reps, help='Monte Carlo replications R')
    parser.add_argument('--window', type=int, nargs=2, action='append', metavar=('START', 'END'),
                        help='Occurrence window, repeatable; sorted and disjoint')
    parser.add_argument('--marginal', type=int, action='append', help='Index n to report P(A_n) at, repeatable')
    # SUPPRESS keeps a global --seed given before the command
    parser.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='Master seed')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Borel-Cantelli criteria for Markov sequences of events')
    parser.add_argument('--config', help='Experiment config (JSON or YAML)')
    parser.add_argument('--out', help='Output file (stdout when omitted)')
    parser.add_argument('--format', choices=['csv', 'json'], help='Output format')
    parser.add_argument('--seed', type=int, help='Master seed (overrides config and BC_DEFAULT_SEED)')
    parser.add_argument('--workers', type=int, help='Worker threads (never changes the output)')
    parser.add_argument('--log-level', default=os.getenv('BC_LOG_LEVEL', 'INFO'), help='Logging level')
    subparsers = parser.add_subparsers(dest='command', help='Commands')

    series_parser = subparsers.add_parser('classify-series', help='Classify a built-in series family')
    series_parser.add_argument('--family', choices=['p_series', 'geometric', 'log_power', 'example41_terms'],
                               default='p_series')
    series_parser.add_argument('--p', type=float, default=2.0, help='p-series exponent')
    series_parser.add_argument('--ratio', type=float, default=0.9, help='Geometric ratio')
    series_parser.add_argument('--q', type=float, default=2.0, help='log_power exponent')
    series_parser.add_argument('--gamma', type=float, default=1.0, help='example41_terms gamma')
    series_parser.add_argument('--n-max', type=int, default=10 ** 6, help='Evaluation budget')

    markov_parser = subparsers.add_parser('markov-tail', help='Order-1 event chain with q_n = scale (n + shift)^exponent')
    markov_parser.add_argument('--p', type=float, default=0.0, help='Constant P(A_{n+1} | A_n)')
    markov_parser.add_argument('--q-scale', type=float, default=1.0)
    markov_parser.add_argument('--q-exponent', type=float, default=-2.0)
    markov_parser.add_argument('--q-shift', type=float, default=1.0)
    markov_parser.add_argument('--p1', type=float, default=0.0, help='P(A_1)')
    markov_parser.add_argument('--criterion', default='cond_prev_complement', help='Criterion series kind')
    add_run_flags(markov_parser, horizon=10 ** 4, reps=200)

    maxima_parser = subparsers.add_parser('falpha-maxima', help='running-maximum events {M_n <= x_n} under log-log thresholds')
    maxima_parser.add_argument('--gamma', type=float, required=True, help='alpha_n = gamma (1 + 1/n)')
    add_run_flags(maxima_parser, horizon=10 ** 4, reps=200)

    newcomer_parser = subparsers.add_parser('falpha-newcomer', help='Newcomer events B_n / C_n')
    newcomer_parser.add_argument('--alpha-family', choices=['constant', 'power', 'superexp', 'example41'],
                                 default='superexp')
    newcomer_parser.add_argument('--alpha-param', type=float, help='Family parameter (value, c or gamma)')
    newcomer_parser.add_argument('--proposition', choices=['prop51', 'prop52'], default='prop51')
    newcomer_parser.add_argument('--non-strict', action='store_true', help='Log failed hypotheses instead of failing')
    add_run_flags(newcomer_parser, horizon=200, reps=200)

    concomitant_parser = subparsers.add_parser('concomitant', help='Concomitant of the maximum')
    concomitant_parser.add_argument('--copula', choices=['independence', 'fgm', 'comonotone'], default='independence')
    concomitant_parser.add_argument('--lambda', dest='lam', type=float, default=0.0, help='FGM parameter')
    concomitant_parser.add_argument('--y', type=float, action='append', help='Level y, repeatable')
    concomitant_parser.add_argument('--n', type=int, action='append', help='Sample size n, repeatable')
    concomitant_parser.add_argument('--no-verdict', action='store_true', help='Skip the a.s. convergence verdict')
    add_run_flags(concomitant_parser, horizon=100, reps=1000)

    subparsers.add_parser('simulate', help='Run the experiment described by --config')
    return parser


def _windows(args: argparse.Namespace) -> List[Dict[str, int]]:
    return [{"start": s, "end": e} for s, e in (args.window or [])]


def _exponent_block(family: str, param: Optional[float]) -> Dict[str, Any]:
    key = {"constant": "value", "power": "c", "example41": "gamma"}.get(family)
    block: Dict[str, Any] = {"family": family}
    if key is not None:
        if param is None and family != "constant":
            raise ConfigError(f"--alpha-param is required for the {family} family")
        if param is not None:
            block[key] = param
    return block


def config_from_flags(args: argparse.Namespace) -> Dict[str, Any]:
    scenario = COMMAND_SCENARIOS[args.command]
    data: Dict[str, Any] = {"scenario": scenario}
    if args.command == "classify-series":
        data["series"] = {"family": args.family, "p": args.p, "ratio": args.ratio, "q": args.q,
                          "gamma": args.gamma, "n_max": args.n_max}
        return data

    data.update({"horizon": args.horizon, "replications": args.reps, "windows": _windows(args),
                 "marginal_indices": args.marginal or []})
    if args.command == "markov-tail":
        data["markov_chain"] = {
            "p": {"family": "constant", "value": args.p},
            "q": {"family": "power", "scale": args.q_scale, "exponent": args.q_exponent, "shift": args.q_shift},
            "p1": args.p1,
            "criterion": args.criterion,
        }
    elif args.command == "falpha-maxima":
        data["falpha_maxima"] = {"example41_gamma": args.gamma}
    elif args.command == "falpha-newcomer":
        data["falpha_newcomer"] = {"exponents": _exponent_block(args.alpha_family, args.alpha_param),
                                   "proposition": args.proposition, "strict": not args.non_strict}
    else:
        block: Dict[str, Any] = {"copula": {"family": args.copula, "lambda": args.lam}, "verdict": not args.no_verdict}
        if args.y:
            block["y_grid"] = args.y
        if args.n:
            block["n_values"] = args.n
        data["concomitant"] = block
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {"master_seed": args.seed, "output_format": args.format, "workers": args.workers}
    if args.config:
        config = load_config(args.config, overrides)
        expected = COMMAND_SCENARIOS.get(args.command)
        if expected is not None and config.scenario != expected:
            raise ConfigError(f"{args.command} needs a {expected} config, {args.config} holds {config.scenario}")
        return config
    if args.command == "simulate":
        raise ConfigError("simulate needs --config")

    data = config_from_flags(args)
    env_seed, env_workers = os.getenv("BC_DEFAULT_SEED"), os.getenv("BC_WORKERS")
    if env_seed is not None:
        data["master_seed"] = int(env_seed)
    if env_workers is not None:
        data["workers"] = int(env_workers)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(data)


def print_summary(result: RunResult, console: Console) -> None:
    table = Table(title=f"{result.config.scenario} (T={result.config.horizon}, R={result.config.replications})",
                  show_header=True)
    for column in ("quantity", "n / window", "exact", "monte carlo", "stderr", "verdict"):
        table.add_column(column)

    def cell(value: Optional[float]) -> str:
        return "" if value is None else f"{value:.6g}"

    for row in result.rows:
        table.add_row(row.quantity, row.n_or_window, cell(row.exact_value), cell(row.mc_estimate),
                      cell(row.mc_stderr), row.verdict or "")
    console.print(table)


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI interface; returns the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    console = Console(stderr=True)

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    try:
        config = resolve_config(args)
    except ValidationError as e:
        console.print(f"❌ Invalid config: {e}")
        return EXIT_USAGE
    except (ConfigError, ValueError) as e:
        console.print(f"❌ {e}")
        return EXIT_USAGE

    try:
        result = run_replications(config)
        text = emit(result, config.output_format, args.out)
    except (BorelCantelliError, OSError) as e:
        logger.error(f"Run failed: {e}")
        console.print(f"❌ {e}")
        return EXIT_RUNTIME

    if args.out is None:
        sys.stdout.write(text)
    print_summary(result, console)
    console.print(f"✅ {config.scenario}: {len(result.rows)} rows" + (f" written to {args.out}" if args.out else ""))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
