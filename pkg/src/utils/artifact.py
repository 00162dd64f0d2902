"""
Versioned JSON model artifacts.

Canonical form: sorted keys, no insignificant whitespace, floats as shortest round-trip
decimals. Saving the same model twice gives identical bytes.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.gp.exact_gp import ExactModel
from src.gp.latent_map import MixedInputs, MixedSchema
from src.gp.lmc import LMCModel
from src.gp.numerics import make_rng
from src.gp.prediction import PerOutputModel, Prediction
from src.gp.svgp import SVModel
from src.gp.trace import TrainingTrace
from src.utils.errors import (
    ArtifactInvariantError,
    ArtifactVersionError,
    DataError,
    DimensionMismatch,
    RoundTripMismatch,
)
from src.utils.io import write_text
from src.utils.logger import get_logger


FORMAT_VERSION = 1
N_PROBES = 16
PROBE_SEED = 20240601

# config family -> artifact family tag
FAMILY_TAGS = {
    "exact": "exact",
    "sv": "sv",
    "lmc-shared": "lmc-sv-shared",
    "lmc-independent": "lmc-sv-independent",
}
_FIELDS = {"format_version", "family", "schema", "model", "config", "seed", "trace_summary", "trace"}

_log = get_logger("artifact")


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=True)


@dataclass
class ModelArtifact:
    family: str
    schema: MixedSchema
    model: Any
    config: Dict[str, Any]
    seed: int
    trace: TrainingTrace = field(default_factory=TrainingTrace)
    format_version: int = FORMAT_VERSION

    @staticmethod
    def from_fit(family: str, model: Any, trace: TrainingTrace, config: Dict[str, Any], seed: int) -> "ModelArtifact":
        return ModelArtifact(
            family=FAMILY_TAGS.get(family, family),
            schema=model.schema,
            model=model,
            config=config,
            seed=seed,
            trace=trace,
        )

    def _model_payload(self) -> Dict[str, Any]:
        if isinstance(self.model, LMCModel):
            return self.model.to_dict()
        models = self.model.models if isinstance(self.model, PerOutputModel) else [self.model]
        return {"outputs": [m.to_dict() for m in models]}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": self.format_version,
            "family": self.family,
            "schema": self.schema.to_dict(),
            "model": self._model_payload(),
            "config": self.config,
            "seed": self.seed,
            "trace_summary": self.trace.summary(),
            "trace": self.trace.to_dict(),
        }

    def dumps(self) -> str:
        return canonical_json(self.to_dict())

    def save(self, path: Path) -> None:
        write_text(self.dumps(), path)
        _log.info(f"Wrote {self.family} artifact to {path}")

    @staticmethod
    def loads(text: str) -> "ModelArtifact":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataError(f"artifact is not valid JSON: {e}") from e
        return ModelArtifact.from_dict(data)

    @staticmethod
    def load(path: Path) -> "ModelArtifact":
        if not path.exists():
            raise FileNotFoundError(f"no such artifact: {path}")
        return ModelArtifact.loads(path.read_text(encoding="utf-8"))

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "ModelArtifact":
        version = data.get("format_version")
        if not isinstance(version, int):
            raise ArtifactVersionError("artifact has no integer format_version")
        if version > FORMAT_VERSION:
            raise ArtifactVersionError(f"artifact format_version {version} is newer than supported {FORMAT_VERSION}")
        unknown = sorted(set(data) - _FIELDS)
        if unknown:
            raise ArtifactVersionError(f"unknown artifact fields for format_version {version}: {', '.join(unknown)}")
        missing = sorted(_FIELDS - set(data))
        if missing:
            raise ArtifactInvariantError(f"artifact is missing fields: {', '.join(missing)}")
        family = data["family"]
        if family not in FAMILY_TAGS.values():
            raise ArtifactInvariantError(f"unknown model family {family!r}")

        try:
            schema = MixedSchema.from_dict(data["schema"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactInvariantError(f"invariant violated in schema: {e}") from e
        model = _load_model(family, data["model"], schema)
        return ModelArtifact(
            family=family,
            schema=schema,
            model=model,
            config=data["config"],
            seed=int(data["seed"]),
            trace=TrainingTrace.from_dict(data["trace"]),
            format_version=version,
        )

    def predict(self, queries: MixedInputs, include_noise: bool = False) -> Prediction:
        return self.model.predict(queries, include_noise=include_noise)


def _check_factors(prefix: str, factors: List[Any]) -> None:
    for i, lower in enumerate(factors):
        diag = np.diag(np.asarray(lower, dtype=float))
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ArtifactInvariantError(
                f"invariant violated in {prefix}.sigma_lower[{i}]: factor diagonal must be positive"
            )


def _load_model(family: str, payload: Dict[str, Any], schema: MixedSchema) -> Any:
    try:
        if family.startswith("lmc"):
            _check_factors("model", payload["sigma_lower"])
            return LMCModel.from_dict(payload, schema)
        models = []
        for o, entry in enumerate(payload["outputs"]):
            if family == "sv":
                _check_factors(f"model.outputs[{o}]", [entry["sigma_lower"]])
                models.append(SVModel.from_dict(entry, schema))
            else:
                models.append(ExactModel.from_dict(entry, schema))
    except ArtifactInvariantError:
        raise
    except (KeyError, TypeError, ValueError, DimensionMismatch) as e:
        raise ArtifactInvariantError(f"invariant violated in model: {e}") from e
    return models[0] if len(models) == 1 else PerOutputModel(models)


def probe_inputs(schema: MixedSchema, count: int = N_PROBES) -> MixedInputs:
    """Fixed probe points spread over the schema's x range and cycling through every level."""
    rng = make_rng(PROBE_SEED)
    bounds = schema.x_bounds or tuple((0.0, 1.0) for _ in range(schema.p))
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x = lo + rng.uniform(size=(count, schema.p)) * (hi - lo)
    t = np.column_stack([np.arange(count) % l_j for l_j in schema.levels]) if schema.q else np.zeros((count, 0), int)
    return MixedInputs(x=x.reshape(count, schema.p), t=t)


def probe_predictions(artifact: ModelArtifact) -> Tuple[np.ndarray, np.ndarray]:
    pred = artifact.predict(probe_inputs(artifact.schema))
    return pred.mean, pred.variance


def _first_divergence(a: Any, b: Any, path: str = "") -> Optional[str]:
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                return f"{path}.{key}".lstrip(".")
            found = _first_divergence(a[key], b[key], f"{path}.{key}")
            if found:
                return found
        return None
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return path.lstrip(".") or "<root>"
        for i, (x, y) in enumerate(zip(a, b)):
            found = _first_divergence(x, y, f"{path}[{i}]")
            if found:
                return found
        return None
    return None if a == b else (path.lstrip(".") or "<root>")


@dataclass
class RoundTripReport:
    path: str
    canonical_match: bool
    probes_match: bool
    n_probes: int = N_PROBES

    @property
    def passed(self) -> bool:
        return self.canonical_match and self.probes_match

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: {self.path} (canonical form identical, {self.n_probes} probe predictions bit-identical)"


def roundtrip(path: Path) -> RoundTripReport:
    """Load, re-serialize and reload an artifact; canonical bytes and probe predictions must match exactly."""
    text = path.read_text(encoding="utf-8")
    original = ModelArtifact.loads(text)
    reserialized = original.dumps()
    stored = canonical_json(json.loads(text))
    if reserialized != stored:
        field_name = _first_divergence(json.loads(stored), json.loads(reserialized))
        raise RoundTripMismatch("re-serialized artifact differs from stored canonical form", field=field_name)

    reloaded = ModelArtifact.loads(reserialized)
    mean_a, var_a = probe_predictions(original)
    mean_b, var_b = probe_predictions(reloaded)
    if not np.array_equal(mean_a, mean_b):
        raise RoundTripMismatch("probe predictions differ after reload", field="predictions.mean")
    if not np.array_equal(var_a, var_b):
        raise RoundTripMismatch("probe predictions differ after reload", field="predictions.variance")
    report = RoundTripReport(path=str(path), canonical_match=True, probes_match=True)
    _log.info(report.summary())
    return report
