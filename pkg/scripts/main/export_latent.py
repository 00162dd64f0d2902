from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse
from typing import Optional

from src.tools.latent_exporter import LatentExporter
from src.utils.artifact import ModelArtifact
from src.utils.io import write_dataframe
from src.utils.logger import get_logger


def run(
    model_path: Path,
    out: Path,
    inducing_out: Optional[Path] = None,
    collinearity_out: Optional[Path] = None,
    raw: bool = False,
) -> None:
    log = get_logger("export_latent")
    artifact = ModelArtifact.load(model_path)
    exporter = LatentExporter(artifact.model, canonical=not raw)

    write_dataframe(exporter.to_dataframe(), out)
    log.info(f"Wrote latent coordinates to {out}")

    collinearity_path = collinearity_out or out.with_name(out.stem + "_collinearity.csv")
    write_dataframe(exporter.collinearity_dataframe(), collinearity_path)
    log.info(f"Wrote collinearity report to {collinearity_path}")

    if inducing_out is not None:
        write_dataframe(exporter.inducing_dataframe(), inducing_out)
        log.info(f"Wrote inducing locations to {inducing_out}")


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="Export learned latent vectors of categorical levels")
    parser.add_argument("--model", type=str, required=True)
    parser.add_argument("--out", type=str, required=True)
    parser.add_argument("--inducing-out", type=str, default=None)
    parser.add_argument("--collinearity-out", type=str, default=None)
    parser.add_argument("--raw", action="store_true", help="skip canonical orientation")
    args = parser.parse_args()
    run(
        Path(args.model),
        Path(args.out),
        Path(args.inducing_out) if args.inducing_out else None,
        Path(args.collinearity_out) if args.collinearity_out else None,
        args.raw,
    )
