"""Command-line entry point: ``personasim <stage> [--config FILE] [--key value ...]``.

Every configuration key is also a flag; flags win over the file.  Without
``--config`` the bundled toy corpus configuration is used.

Exit status: 0 success, 1 configuration error (including missing input files),
2 missing upstream artifact, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from .config import CASSETTE_MODES, ConfigError, RunConfig, load_config
from .pipeline import STAGES, MissingArtifact, run_all
from .toydata import toy_corpus_dir

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_RUNTIME = 0, 1, 2, 3

COMMANDS = {**{name: (lambda cfg, fn=fn: [fn(cfg)]) for name, fn in STAGES.items()}, "run-all": run_all}
DESCRIPTIONS = {
    "ingest": "parse reviews and metadata, k-core filter, per-user chronological split",
    "profile": "behavioural signatures and temporally stratified histories",
    "infer": "prompt contexts and Big Five profiles",
    "simulate": "run every configured policy over the mock recommendation lists",
    "evaluate": "fidelity, real-vs-synthetic algorithm comparison, trait reports",
    "run-all": "ingest, profile, infer, simulate and evaluate in sequence",
}

FLAG_HELP = {
    "reviews": "review JSONL files or globs",
    "metadata": "item metadata JSONL files or globs",
    "out": "run directory for artifacts",
    "min_interactions": "k-core threshold for users and items",
    "test_fraction": "per-user share of interactions held out for testing",
    "eta": "records kept per adaptive time window",
    "cycles": "purchase-rhythm cycle lengths in days",
    "token_budget": "prompt context budget in whitespace tokens",
    "backend": "personality backend: deterministic or llm",
    "llm_base_url": "OpenAI-compatible endpoint for live or record mode",
    "llm_model": "chat model name sent to the endpoint",
    "cassette": "request/response cassette file",
    "cassette_mode": "cassette use: " + "/".join(CASSETTE_MODES),
    "llm_max_in_flight": "maximum concurrent chat requests",
    "llm_timeout": "per-request timeout in seconds",
    "policies": "simulation policies to run",
    "algorithms": "recommenders trained on real and synthetic logs",
    "susceptibility_algorithm": "recommender whose per-user nDCG drives the trait cohorts",
    "k": "nDCG cutoff",
    "seed": "global seed (64-bit unsigned)",
    "jobs": "worker threads for per-user stages",
    "trait_weights": "per-trait correlate weights for the deterministic backend",
    "hyperparams": "per-algorithm hyperparameters, e.g. {\"mf\": {\"epochs\": 50}}",
}


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _json_table(text: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"expected a JSON object: {exc}") from None
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    p.add_argument("--config", metavar="FILE",
                   help=f"TOML run configuration (default: {toy_corpus_dir() / 'toy.toml'})")
    for f in fields(RunConfig):
        default = getattr(defaults, f.name)
        flag = "--" + f.name.replace("_", "-")
        kwargs: dict = {"default": None, "dest": f.name}
        if isinstance(default, dict):
            kwargs.update(type=_json_table, metavar="JSON")
            shown = json.dumps(default)
        elif isinstance(default, list):
            kwargs.update(metavar="A,B,...")
            shown = ",".join(str(v) for v in default) or "none"
        else:
            kwargs.update(type=type(default), metavar=f.name.upper())
            shown = default if default != "" else "unset"
        p.add_argument(flag, help=f"{FLAG_HELP[f.name]} (default: {shown})".replace("%", "%%"), **kwargs)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="personasim", description="Personality-driven user simulation for recommender evaluation.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _add_config_flags(sub.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name]))
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error; report the status instead of exiting
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        config_path = args.config if args.config is not None else toy_corpus_dir() / "toy.toml"
        cfg = load_config(config_path, overrides).validate()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        for line in COMMANDS[args.command](cfg):
            print(line)
    except MissingArtifact as exc:
        print(f"missing upstream artifact: {exc} (run the earlier stages first)", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any stage failure maps to one status
        logging.getLogger(__name__).debug("stage failed", exc_info=True)
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
