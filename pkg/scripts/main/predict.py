from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse
from typing import Optional

from src.utils.artifact import ModelArtifact
from src.utils.io import read_inputs, write_dataframe
from src.utils.logger import get_logger


def run(model_path: Path, queries_path: Path, out: Optional[Path] = None, include_noise: bool = False) -> None:
    """Predict from the artifact alone; response columns in the query file are ignored.
    Without `out` the CSV goes to stdout."""
    log = get_logger("predict")
    artifact = ModelArtifact.load(model_path)
    inputs, _, _ = read_inputs(queries_path, artifact.schema)
    prediction = artifact.predict(inputs, include_noise=include_noise)
    frame = prediction.to_dataframe()
    if out is None:
        sys.stdout.write(frame.to_csv(index=False, float_format="%.17g"))
        return
    write_dataframe(frame, out)
    log.info(f"Wrote {len(inputs)} predictions from {artifact.family} model to {out}")


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="Predict mean and variance at query points")
    parser.add_argument("--model", type=str, required=True)
    parser.add_argument("--queries", type=str, required=True)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--include-noise", action="store_true")
    args = parser.parse_args()
    run(Path(args.model), Path(args.queries), Path(args.out) if args.out else None, args.include_noise)
