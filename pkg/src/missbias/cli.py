"""Command-line entry point.

Exit codes: 0 success, 1 runtime or oracle failure (and acceptance misses
under ``--strict``), 2 configuration error. A configuration error never
leaves output files behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment, verify
from .config import SIMULATIONS, McmcSpec, canned_config, canned_mcmc, load_config
from .diagnostics import summarize
from .errors import ConfigError, MissBiasError
from .sampler import read_chain_csv

log = logging.getLogger("missbias")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="missbias", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    rep = sub.add_parser("reproduce", help="run one of the three canned simulations")
    rep.add_argument("--sim", type=int, choices=SIMULATIONS, required=True)
    rep.add_argument("--seed", type=_seed, default=0)
    rep.add_argument("--out", default=None, help="output directory (default results/sim<N>)")
    rep.add_argument("--strict", action="store_true", help="exit 1 when an acceptance band is missed")
    rep.add_argument("--jobs", type=_positive_int, default=experiment.default_jobs())
    rep.add_argument("--svg", action="store_true", help="also render SVG figures")
    rep.add_argument("--iterations", type=_positive_int, default=None, help="override the canned chain length")
    rep.add_argument("--burn-in", type=int, default=None, help="override the canned burn-in")

    run = sub.add_parser("run", help="run an experiment described by a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--jobs", type=_positive_int, default=experiment.default_jobs())
    run.add_argument("--out", default=None, help="override output_dir from the config")
    run.add_argument("--svg", action="store_true")

    sub.add_parser("verify", help="run the oracle suite")

    summ = sub.add_parser("summarize", help="summarise chain CSV dumps")
    summ.add_argument("--chain", nargs="+", required=True, metavar="FILE")
    return parser


def _mcmc_override(args):
    fields = canned_mcmc(args.sim).model_dump()
    if args.iterations is not None:
        fields["iterations"] = args.iterations
    if args.burn_in is not None:
        fields["burn_in"] = args.burn_in
    try:
        return McmcSpec(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_reproduce(args) -> int:
    overrides = {}
    if args.iterations is not None or args.burn_in is not None:
        overrides["mcmc"] = _mcmc_override(args)
    out = args.out or f"results/sim{args.sim}"
    cfg = canned_config(args.sim, args.seed, out, **overrides)
    _, doc = experiment.reproduce(args.sim, cfg, jobs=args.jobs, svg=args.svg)
    comp = doc["comparison"]
    for name, check in comp["checks"].items():
        print(f"{'PASS' if check['pass'] else 'MISS'}  {name}: {json.dumps(check['observed'])}")
    print(f"summary written to {out}/summary.json")
    if args.strict and not comp["all_pass"]:
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    results = experiment.run_experiment(cfg, jobs=args.jobs, out_dir=out, svg=args.svg)
    print(f"{len(results)} replicate(s) written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_checks()
    print(verify.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_summarize(args) -> int:
    chains = [read_chain_csv(p) for p in args.chain]
    for i, c in enumerate(chains):
        c.chain_id = i
    print(json.dumps(summarize(chains).to_json(), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"reproduce": cmd_reproduce, "run": cmd_run, "verify": cmd_verify, "summarize": cmd_summarize}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissBiasError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
