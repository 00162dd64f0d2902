from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse
from typing import Optional

from src.tools.benchmarks import NOISE_PRESETS, BenchmarkGenerator, NoiseSpec, parse_grid
from src.utils.errors import UsageError
from src.utils.io import write_dataset
from src.utils.logger import get_logger


DEFAULT_GRIDS = {"single": "100x100x5", "multi": "30x30x5x5"}


def add_arguments(p: argparse.ArgumentParser, family: str) -> None:
    p.add_argument("--grid", type=str, default=DEFAULT_GRIDS[family], help=f"e.g. {DEFAULT_GRIDS[family]}")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--noise-sd", type=float, default=None, help="Gaussian noise SD added to every output")
    noise.add_argument("--noise-level", choices=sorted(NOISE_PRESETS[family]), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)


def run_from_args(family: str, grid: str, out: Path, seed: int = 0, noise_sd: Optional[float] = None, noise_level: Optional[str] = None) -> None:
    log = get_logger("generate_dataset")
    if noise_sd is not None and noise_level is not None:
        raise UsageError("give either --noise-sd or --noise-level, not both")
    noise = NoiseSpec.preset(family, noise_level, seed) if noise_level else NoiseSpec(sd=noise_sd or 0.0, seed=seed)
    dataset = BenchmarkGenerator(family).generate(parse_grid(grid, family), noise)
    write_dataset(dataset, out)
    log.info(f"Wrote {len(dataset)} rows to {out}")


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="Generate a synthetic benchmark dataset")
    parser.add_argument("family", choices=["single", "multi"])
    known, _ = parser.parse_known_args()
    add_arguments(parser, known.family)
    args = parser.parse_args()
    run_from_args(args.family, args.grid, Path(args.out), args.seed, args.noise_sd, args.noise_level)
