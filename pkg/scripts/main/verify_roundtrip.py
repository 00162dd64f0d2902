from pathlib import Path
import sys

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import argparse

from src.utils.artifact import RoundTripReport, roundtrip


def run(model_path: Path) -> RoundTripReport:
    report = roundtrip(model_path)
    print(report.summary())
    return report


if __name__ == "__main__":
    from src.utils.logger import setup_logging
    setup_logging("INFO")

    parser = argparse.ArgumentParser(description="Check that an artifact reloads to identical bytes and predictions")
    parser.add_argument("--model", type=str, required=True)
    args = parser.parse_args()
    run(Path(args.model))
