"""ldtk entry point: one JSON job file in, tables and summary.json out"""
import argparse
import json
import logging
import sys
from pathlib import Path

from cli.commands.check import run_check
from cli.commands.infinite import run_infinite_line
from cli.commands.lattice import run_correlations, run_steady
from cli.commands.macroscopic import run_ldf_current, run_ldf_density, run_ring_instability
from cli.commands.simulation import run_simulate
from cli.commands.spectral import run_rate_function, run_scgf
from cli.core.config import settings
from cli.core.output import RunOutput
from cli.schemas.job import parse_config
from cli.schemas.results import ErrorResponse
from src.exceptions import InputError, LdtkError

logger = logging.getLogger(__name__)

HANDLERS = {
    "scgf": run_scgf,
    "rate-function": run_rate_function,
    "steady": run_steady,
    "correlations": run_correlations,
    "ldf-current": run_ldf_current,
    "ldf-density": run_ldf_density,
    "ring-instability": run_ring_instability,
    "simulate": run_simulate,
    "infinite-line": run_infinite_line,
    "check": run_check,
}

INVARIANT_FAILURE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.APP_NAME,
                                     description="Large-deviation toolkit for Markov jump processes and diffusive systems")
    parser.add_argument("config", help="JSON job file")
    parser.add_argument("--out", help="output directory (overrides the job's 'output')")
    parser.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    return parser


def read_job(path):
    try:
        text = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e
    return parse_config(text)


def run(config, out_dir=None) -> int:
    """Run one job file and return the process exit code."""
    job = read_job(config)
    directory = Path(out_dir or job.output or settings.OUTPUT_DIR)
    out = RunOutput(directory, job.format)
    logger.info("%s: writing to %s", job.command, directory)
    passed = HANDLERS[job.command](job, out)
    summary = out.summary(job.command)
    for name in out.files:
        print(directory / name)
    print(summary)
    if job.command == "check" and not passed:
        return INVARIANT_FAILURE
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else getattr(logging, settings.LOG_LEVEL, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args.config, args.out)
    except LdtkError as e:
        response = ErrorResponse(error=type(e).__name__, detail=str(e))
        print(json.dumps(response.model_dump()), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("Unexpected error: %s", e)
        response = ErrorResponse(error="InternalError", detail=str(e))
        print(json.dumps(response.model_dump()), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
