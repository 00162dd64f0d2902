from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse
from typing import Optional

from src.config.config import AppConfig, config_from_args
from src.tools.trainer import fit
from src.utils.artifact import ModelArtifact
from src.utils.io import read_dataset, write_dataframe
from src.utils.logger import get_logger


def add_training_arguments(p: argparse.ArgumentParser) -> None:
    """Flags shared by train and cv; each overrides the matching config entry when given."""
    p.add_argument("--config", type=str, default=None, help="YAML config (defaults to configs/main_config.yaml if present)")
    p.add_argument("--model", dest="family", type=str, default=None, help="exact | sv | lmc-shared | lmc-independent")
    p.add_argument("--inducing", dest="n_inducing", type=int, default=None)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--latent-functions", dest="n_latent_functions", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--step-size", dest="step_size", type=float, default=None)
    p.add_argument("--natgrad-gamma", dest="natgrad_gamma", type=float, default=None)
    p.add_argument("--z-freeze-fraction", dest="z_freeze_fraction", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--fixed-noise", dest="fixed_noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-convergence-check", dest="check_convergence", action="store_const", const=False, default=None)
    p.add_argument("--workers", type=int, default=None)


TRAINING_KEYS = (
    "family", "n_inducing", "latent_dim", "n_latent_functions", "batch_size", "max_iters", "step_size",
    "natgrad_gamma", "z_freeze_fraction", "restarts", "fixed_noise", "seed", "check_convergence", "workers",
)


def config_from_namespace(args: argparse.Namespace) -> AppConfig:
    return config_from_args(args.config, **{k: getattr(args, k) for k in TRAINING_KEYS})


def run_from_config(cfg: AppConfig, data_path: Path, out: Path, trace_out: Optional[Path] = None) -> ModelArtifact:
    log = get_logger("train_model")
    train_cfg = cfg.train
    data = read_dataset(data_path)
    log.info(f"Training {train_cfg.family} on {data_path} (n={len(data)}, N_op={data.n_outputs}, seed={train_cfg.seed})")
    model, trace = fit(train_cfg.family, data, train_cfg, workers=cfg.workers)

    artifact = ModelArtifact.from_fit(train_cfg.family, model, trace, cfg.to_dict(), train_cfg.seed)
    artifact.save(out)
    trace_path = trace_out or out.with_name(out.stem + "_trace.csv")
    write_dataframe(trace.to_dataframe(include_seconds=True), trace_path)
    log.info(f"Wrote trace ({len(trace)} iterations) to {trace_path}")
    return artifact


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="Train a mixed-variable GP and write a model artifact")
    add_training_arguments(parser)
    parser.add_argument("--data", type=str, required=True)
    parser.add_argument("--out", type=str, required=True)
    parser.add_argument("--trace-out", type=str, default=None)
    args = parser.parse_args()
    run_from_config(
        config_from_namespace(args), Path(args.data), Path(args.out), Path(args.trace_out) if args.trace_out else None
    )
