from dataclasses import dataclass
from typing import Any, List, Optional

import numpy as np
import pandas as pd

from src.gp.latent_map import Normalization


@dataclass
class Prediction:
    """
    Predictive moments in original response units.

    `mean` and `variance` are (n*, N_op). `covariance`, when requested, is over the flattened
    (query, output) index a * N_op + o.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: Optional[np.ndarray] = None

    @property
    def n_outputs(self) -> int:
        return int(self.mean.shape[1])

    @staticmethod
    def single_output(
        mean: np.ndarray, variance: np.ndarray, covariance: Optional[np.ndarray], normalization: Normalization
    ) -> "Prediction":
        scale2 = float(normalization.scale[0]) ** 2
        return Prediction(
            mean=normalization.inverse(np.asarray(mean, dtype=float).reshape(-1, 1)),
            variance=normalization.inverse_variance(np.asarray(variance, dtype=float).reshape(-1, 1)),
            covariance=None if covariance is None else np.asarray(covariance, dtype=float) * scale2,
        )

    @staticmethod
    def stack(parts: List["Prediction"]) -> "Prediction":
        """Column-stack per-output predictions; cross-output covariance blocks are zero."""
        mean = np.hstack([p.mean for p in parts])
        variance = np.hstack([p.variance for p in parts])
        covariance = None
        if all(p.covariance is not None for p in parts):
            n, n_op = mean.shape
            covariance = np.zeros((n * n_op, n * n_op))
            for o, p in enumerate(parts):
                covariance[o::n_op, o::n_op] = p.covariance
        return Prediction(mean=mean, variance=variance, covariance=covariance)

    def to_dataframe(self) -> pd.DataFrame:
        data = {}
        for o in range(self.n_outputs):
            data[f"mean_{o + 1}"] = self.mean[:, o]
            data[f"var_{o + 1}"] = self.variance[:, o]
        return pd.DataFrame(data)


class PerOutputModel:
    """Independent single-output models, one per response column, predicted side by side."""

    def __init__(self, models: List[Any]):
        if not models:
            raise ValueError("PerOutputModel needs at least one model")
        self.models = list(models)

    @property
    def n_outputs(self) -> int:
        return len(self.models)

    @property
    def schema(self) -> Any:
        return self.models[0].schema

    def predict(self, queries: Any, full_cov: bool = False, include_noise: bool = False) -> Prediction:
        return Prediction.stack([m.predict(queries, full_cov=full_cov, include_noise=include_noise) for m in self.models])

    def predict_mean(self, queries: Any) -> np.ndarray:
        return self.predict(queries).mean
