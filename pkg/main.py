import argparse
import sys
from pathlib import Path
from typing import List, Optional

from scripts.main import export_latent, export_trace, generate_dataset, predict, run_cv, train_model, verify_roundtrip
from src.utils.errors import GPError, UsageError
from src.utils.logger import get_logger, setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixedgp", description="Scalable GPs over mixed numerical/categorical inputs")
    parser.add_argument("--log-level", type=str, default=None, help="overrides LOG_LEVEL")
    parser.add_argument("--log-file", type=str, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    for family in ("single", "multi"):
        p = sub.add_parser(f"gen-{family}", help=f"generate the {family}-response benchmark")
        generate_dataset.add_arguments(p, family)

    p = sub.add_parser("train", help="train a model and write an artifact plus trace CSV")
    train_model.add_training_arguments(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--trace-out", type=str, default=None)

    p = sub.add_parser("predict", help="predict mean/variance at query points")
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--queries", type=str, required=True)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--include-noise", action="store_true")

    p = sub.add_parser("cv", help="k-fold cross-validation")
    run_cv.add_cv_arguments(p)

    p = sub.add_parser("latent-export", help="export latent coordinates of categorical levels")
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--inducing-out", type=str, default=None)
    p.add_argument("--collinearity-out", type=str, default=None)
    p.add_argument("--raw", action="store_true")

    p = sub.add_parser("trace-export", help="export the trace embedded in an artifact")
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--out", type=str, required=True)

    p = sub.add_parser("roundtrip", help="verify an artifact reloads to identical bytes and predictions")
    p.add_argument("--model", type=str, required=True)
    return parser


def _optional_path(value: Optional[str]) -> Optional[Path]:
    return Path(value) if value else None


def dispatch(args: argparse.Namespace) -> None:
    log = get_logger("main")
    command = args.command
    log.info(f"=== {command} ===")

    if command.startswith("gen-"):
        generate_dataset.run_from_args(
            command[len("gen-"):], args.grid, Path(args.out), args.seed, args.noise_sd, args.noise_level
        )
    elif command == "train":
        train_model.run_from_config(
            train_model.config_from_namespace(args), Path(args.data), Path(args.out), _optional_path(args.trace_out)
        )
    elif command == "predict":
        predict.run(Path(args.model), Path(args.queries), _optional_path(args.out), args.include_noise)
    elif command == "cv":
        run_cv.run_from_config(
            run_cv.config_from_namespace(args), Path(args.data), Path(args.out), _optional_path(args.summary_out)
        )
    elif command == "latent-export":
        export_latent.run(
            Path(args.model), Path(args.out), _optional_path(args.inducing_out), _optional_path(args.collinearity_out), args.raw
        )
    elif command == "trace-export":
        export_trace.run(Path(args.model), Path(args.out))
    elif command == "roundtrip":
        verify_roundtrip.run(Path(args.model))
    else:
        raise UsageError(f"unknown subcommand {command!r}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, _optional_path(args.log_file))
    try:
        dispatch(args)
    except GPError as e:
        print(e.one_line(), file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        err = UsageError(f"file not found: {e.filename or e}")
        print(err.one_line(), file=sys.stderr)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
