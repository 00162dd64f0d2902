from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd


TRACE_COLUMNS = ["iteration", "elbo", "kl", "lt", "seconds"]


@dataclass
class TrainingTrace:
    """
    Per-iteration record of a fit. For dense fits `elbo` holds the log marginal likelihood
    and `kl` is zero. `full_elbo` holds (iteration, full-data ELBO) pairs when requested.
    """

    iterations: List[int] = field(default_factory=list)
    elbo: List[float] = field(default_factory=list)
    kl: List[float] = field(default_factory=list)
    lt: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    full_elbo: List[Tuple[int, float]] = field(default_factory=list)
    stopped_early: bool = False
    z_frozen_at: Optional[int] = None

    def __len__(self) -> int:
        return len(self.iterations)

    def append(self, iteration: int, elbo: float, kl: float, lt: float, seconds: float) -> None:
        self.iterations.append(int(iteration))
        self.elbo.append(float(elbo))
        self.kl.append(float(kl))
        self.lt.append(float(lt))
        self.seconds.append(float(seconds))

    def window_mean(self, window: int, offset: int = 0) -> float:
        """Mean ELBO over `window` iterations ending `offset` iterations before the last one."""
        end = len(self.elbo) - offset
        return float(np.mean(self.elbo[max(0, end - window) : end]))

    def converged(self, window: int, tol: float) -> bool:
        """Relative improvement of the last window mean over the one before falls below tol."""
        if len(self.elbo) < 2 * window:
            return False
        current = self.window_mean(window)
        previous = self.window_mean(window, offset=window)
        return (current - previous) / max(abs(previous), 1.0) < tol

    def moving_average(self, window: int) -> np.ndarray:
        values = np.asarray(self.elbo, dtype=float)
        if len(values) < window:
            return values.copy()
        kernel = np.ones(window) / window
        return np.convolve(values, kernel, mode="valid")

    def to_dataframe(self, include_seconds: bool = True) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                "iteration": self.iterations,
                "elbo": self.elbo,
                "kl": self.kl,
                "lt": self.lt,
                "seconds": self.seconds if include_seconds else [np.nan] * len(self),
            },
            columns=TRACE_COLUMNS,
        )
        return df

    def summary(self) -> Dict[str, Any]:
        """Timing-free digest embedded in artifacts."""
        if not self.elbo:
            return {"iterations": 0}
        return {
            "iterations": len(self),
            "final_elbo": self.elbo[-1],
            "best_elbo": max(self.elbo),
            "final_kl": self.kl[-1],
            "stopped_early": self.stopped_early,
            "z_frozen_at": self.z_frozen_at,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "elbo": self.elbo,
            "kl": self.kl,
            "lt": self.lt,
            "full_elbo": [list(pair) for pair in self.full_elbo],
            "stopped_early": self.stopped_early,
            "z_frozen_at": self.z_frozen_at,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "TrainingTrace":
        trace = TrainingTrace(
            iterations=[int(i) for i in data.get("iterations", [])],
            elbo=[float(v) for v in data.get("elbo", [])],
            kl=[float(v) for v in data.get("kl", [])],
            lt=[float(v) for v in data.get("lt", [])],
            full_elbo=[(int(i), float(v)) for i, v in data.get("full_elbo", [])],
            stopped_early=bool(data.get("stopped_early", False)),
            z_frozen_at=data.get("z_frozen_at"),
        )
        trace.seconds = [float("nan")] * len(trace.iterations)
        return trace

    @staticmethod
    def merged(traces: List["TrainingTrace"]) -> "TrainingTrace":
        """Iteration-wise sum of independent fits, truncated to the shortest trace."""
        length = min(len(t) for t in traces)
        out = TrainingTrace(
            iterations=list(traces[0].iterations[:length]),
            elbo=[float(sum(t.elbo[i] for t in traces)) for i in range(length)],
            kl=[float(sum(t.kl[i] for t in traces)) for i in range(length)],
            lt=[float(sum(t.lt[i] for t in traces)) for i in range(length)],
            seconds=[float(max(t.seconds[i] for t in traces)) for i in range(length)],
            stopped_early=any(t.stopped_early for t in traces),
            z_frozen_at=traces[0].z_frozen_at,
        )
        return out
