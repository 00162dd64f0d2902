from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse

from src.utils.artifact import ModelArtifact
from src.utils.io import write_dataframe
from src.utils.logger import get_logger


def run(model_path: Path, out: Path) -> None:
    """Trace stored in the artifact; artifacts carry no timings, so `seconds` is empty."""
    log = get_logger("export_trace")
    artifact = ModelArtifact.load(model_path)
    write_dataframe(artifact.trace.to_dataframe(include_seconds=False), out)
    log.info(f"Wrote {len(artifact.trace)} trace rows to {out}")


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="Export the training trace embedded in a model artifact")
    parser.add_argument("--model", type=str, required=True)
    parser.add_argument("--out", type=str, required=True)
    args = parser.parse_args()
    run(Path(args.model), Path(args.out))
