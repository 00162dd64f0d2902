from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse
from typing import Optional

from scripts.main.train_model import TRAINING_KEYS, add_training_arguments
from src.config.config import AppConfig, config_from_args
from src.tools.cross_validation import CVReport, crossvalidate
from src.utils.io import read_dataset, write_dataframe
from src.utils.logger import get_logger


def run_from_config(cfg: AppConfig, data_path: Path, out: Path, summary_out: Optional[Path] = None) -> CVReport:
    log = get_logger("run_cv")
    data = read_dataset(data_path)
    train_cfg = cfg.train
    log.info(f"{cfg.cv_folds}-fold CV of {train_cfg.family} on {data_path} (fold seed {cfg.cv_seed})")
    report = crossvalidate(train_cfg.family, data, train_cfg, k=cfg.cv_folds, seed=cfg.cv_seed, max_workers=cfg.workers)
    write_dataframe(report.to_dataframe(), out)
    summary_path = summary_out or out.with_name(out.stem + "_summary.csv")
    write_dataframe(report.summary_frame(), summary_path)
    if report.failures:
        log.warning(f"{len(report.failures)} fold(s) failed; see the status column in {out}")
    log.info(f"Wrote CV report to {out} and {summary_path}")
    print(report.summary())
    return report


def add_cv_arguments(p: argparse.ArgumentParser) -> None:
    add_training_arguments(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--folds", dest="cv_folds", type=int, default=None)
    p.add_argument("--cv-seed", dest="cv_seed", type=int, default=None)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--summary-out", type=str, default=None)


def config_from_namespace(args: argparse.Namespace) -> AppConfig:
    overrides = {k: getattr(args, k) for k in TRAINING_KEYS}
    overrides.update(cv_folds=args.cv_folds, cv_seed=args.cv_seed)
    return config_from_args(args.config, **overrides)


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="k-fold cross-validation with RMSE in original units")
    add_cv_arguments(parser)
    args = parser.parse_args()
    run_from_config(
        config_from_namespace(args), Path(args.data), Path(args.out), Path(args.summary_out) if args.summary_out else None
    )
