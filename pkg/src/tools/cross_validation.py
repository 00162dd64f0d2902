import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config.config import TrainConfig
from src.gp.latent_map import Dataset
from src.gp.numerics import make_rng
from src.tools.trainer import fit
from src.utils.errors import UsageError
from src.utils.logger import get_logger


# (training data, fold index) -> fitted model exposing predict_mean(inputs) in original units
FitFn = Callable[[Dataset, int], Any]


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Shuffled fold index per row; fold sizes differ by at most one."""
    if k < 2 or n < k:
        raise UsageError(f"k-fold CV needs 2 <= k <= n, got k={k}, n={n}")
    folds = np.empty(n, dtype=int)
    for f, rows in enumerate(np.array_split(make_rng(seed).permutation(n), k)):
        folds[rows] = f
    return folds


def rmse(predicted: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Per-output root mean squared error."""
    diff = np.asarray(predicted, dtype=float) - np.asarray(observed, dtype=float)
    return np.sqrt(np.mean(diff**2, axis=0))


@dataclass
class CVReport:
    folds: np.ndarray  # fold index per row
    seed: int
    fold_rmse: np.ndarray  # (k, N_op), NaN for failed folds
    failures: List[Dict[str, str]] = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.fold_rmse.shape[0])

    @property
    def mean(self) -> np.ndarray:
        return np.nanmean(self.fold_rmse, axis=0)

    @property
    def sd(self) -> np.ndarray:
        ok = np.sum(np.isfinite(self.fold_rmse[:, 0]))
        return np.nanstd(self.fold_rmse, axis=0, ddof=1 if ok > 1 else 0)

    def to_dataframe(self) -> pd.DataFrame:
        errors = {int(f["fold"]): f["error"] for f in self.failures}
        rows = []
        for f in range(self.k):
            for o in range(self.fold_rmse.shape[1]):
                rows.append({
                    "fold": f + 1,
                    "output": o + 1,
                    "rmse": self.fold_rmse[f, o],
                    "status": "failed" if f in errors else "ok",
                    "error": errors.get(f, ""),
                })
        return pd.DataFrame(rows, columns=["fold", "output", "rmse", "status", "error"])

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "output": np.arange(1, self.fold_rmse.shape[1] + 1),
            "mean_rmse": self.mean,
            "sd_rmse": self.sd,
            "folds_ok": int(np.sum(np.isfinite(self.fold_rmse[:, 0]))),
            "seed": self.seed,
        })

    def summary(self) -> str:
        parts = [f"y_{o + 1}: {m:.4f} +/- {s:.4f}" for o, (m, s) in enumerate(zip(self.mean, self.sd))]
        return f"{self.k}-fold CV RMSE ({len(self.failures)} failed): " + "; ".join(parts)


class CrossValidator:
    """Runs folds on a thread pool; a failing fold is recorded, not fatal."""

    def __init__(self, fit_fn: FitFn, max_workers: int = 4):
        self._fit_fn = fit_fn
        self._max_workers = max(1, max_workers)
        self._log = get_logger("cross_validation")
        self._failures_lock = threading.Lock()
        self._failures: List[Dict[str, str]] = []

    def _run_fold(self, data: Dataset, folds: np.ndarray, fold: int) -> np.ndarray:
        train = data.subset(np.flatnonzero(folds != fold))
        test = data.subset(np.flatnonzero(folds == fold))
        model = self._fit_fn(train, fold)
        score = rmse(model.predict_mean(test.inputs), test.original_outputs())
        self._log.info(f"Fold {fold + 1}: RMSE {np.array2string(score, precision=4)}")
        return score

    def run(self, data: Dataset, k: int = 10, seed: int = 0) -> CVReport:
        folds = fold_assignment(len(data), k, seed)
        scores = np.full((k, data.n_outputs), np.nan)
        self._log.info(f"{k}-fold CV on n={len(data)} with max_workers={self._max_workers}")
        with ThreadPoolExecutor(max_workers=self._max_workers) as pool:
            futures = {pool.submit(self._run_fold, data, folds, f): f for f in range(k)}
            for fut in as_completed(futures):
                fold = futures[fut]
                try:
                    scores[fold] = fut.result()
                except Exception as e:
                    self._log.warning(f"Fold {fold + 1} failed: {e}")
                    with self._failures_lock:
                        self._failures.append({"fold": str(fold), "error": str(e)})
        failures = sorted(self.drain_failures(), key=lambda f: int(f["fold"]))
        report = CVReport(folds=folds, seed=seed, fold_rmse=scores, failures=failures)
        self._log.info(report.summary())
        return report

    def drain_failures(self) -> List[Dict[str, str]]:
        """Return and clear the failures captured during the last run."""
        with self._failures_lock:
            out = list(self._failures)
            self._failures.clear()
            return out


def crossvalidate(
    family: str,
    data: Dataset,
    config: TrainConfig,
    k: int = 10,
    seed: int = 0,
    max_workers: int = 4,
    fit_fn: Optional[FitFn] = None,
) -> CVReport:
    """Refit `family` from scratch per fold with seed config.seed + fold."""
    if fit_fn is None:

        def fit_fn(train: Dataset, fold: int) -> Any:
            model, _ = fit(family, train, replace(config, seed=config.seed + fold), workers=1)
            return model

    return CrossValidator(fit_fn, max_workers=max_workers).run(data, k=k, seed=seed)
