"""Command-line entry point for the Gleason grading pipeline.

Generates synthetic slides, runs single pipeline stages or the whole chain
over a run directory, and normalises external images.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

import argparse
import sys

from core.errors import ConfigError, DataError, GleasonError, ModelFormatError, NumericError
from core.pipeline import Pipeline, PIPELINE_ORDER, EXTRA_STAGES, stain_normalize
from core.pipeline_config import PipelineConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag_type(default):
    if isinstance(default, bool):
        return lambda text: text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def add_config_flags(parser):
    """One --flag per PipelineConfig key; unset flags leave the file value alone."""
    parser.add_argument("--config", help="pipeline config JSON (default: $GLEASON_CONFIG or data/pipeline_config.json)")
    for key, default in PipelineConfig.DEFAULT_CONFIG.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, list):
            item_type = type(default[0]) if default else int
            parser.add_argument(flag, dest=key, type=item_type, nargs="+", default=None)
        else:
            parser.add_argument(flag, dest=key, type=_flag_type(default), default=None)


def build_parser():
    parser = ArgumentParser(prog="main.py", description="Gleason grading pipeline")
    commands = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    commands.required = True

    for name in ("synth",) + PIPELINE_ORDER + EXTRA_STAGES + ("run-all",):
        add_config_flags(commands.add_parser(name))

    stain = commands.add_parser("stain-norm", help="histogram-match an image to a reference")
    stain.add_argument("--source", required=True)
    stain.add_argument("--reference", required=True)
    stain.add_argument("--output", required=True)
    return parser


def _overrides(args):
    return {key: getattr(args, key, None) for key in PipelineConfig.DEFAULT_CONFIG}


def run(args):
    if args.command == "stain-norm":
        path = stain_normalize(args.source, args.reference, args.output)
        print(f"[STAIN-NORM] written {path}")
        return

    config = PipelineConfig.resolve(args.config, _overrides(args))
    pipeline = Pipeline(config)

    print("=" * 40)
    print("GLEASON GRADING PIPELINE")
    print(args.command.upper())
    print("=" * 40)

    if args.command == "synth":
        pipeline.synth()
    elif args.command == "run-all":
        metrics = pipeline.run_all()
        print(f"[RUN-ALL] metrics written to {metrics}")
    else:
        pipeline.run_stage(args.command)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        run(args)
    except (UsageError, ConfigError) as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"[NUMERIC] {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelFormatError, GleasonError, FileNotFoundError) as exc:
        print(f"[DATA] {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
