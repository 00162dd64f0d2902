"""
Dense symmetric linear algebra and seeded randomness.

Every covariance solve in the package goes through `cholesky_with_jitter`; no explicit
inverse is formed. The functions accept plain numpy arrays and autograd-traced values alike,
so the same code serves evaluation and reverse-mode differentiation.
"""

from dataclasses import dataclass
from typing import Any, List

import autograd.numpy as anp
import numpy as np
from autograd.scipy.linalg import solve_triangular
from autograd.tracer import getval

from src.utils.errors import DimensionMismatch, NonFinite, NotPositiveDefinite
from src.utils.logger import get_logger


RNG_ALGORITHM = "PCG64"
JITTER_GROWTH = 10.0
MAX_RELATIVE_JITTER = 1e-4

_log = get_logger("numerics")


@dataclass(frozen=True)
class CholFactor:
    lower: Any
    jitter_used: float = 0.0

    @property
    def order(self) -> int:
        return int(self.lower.shape[0])


def _first_jitter(mean_diag: float) -> float:
    return max(mean_diag, 1.0) * 1e-10


def cholesky_with_jitter(m: Any, base_jitter: float = 0.0) -> CholFactor:
    """
    Lower Cholesky factor of a symmetric matrix. The first attempt uses `base_jitter`;
    failures retry with the jitter multiplied by 10 until it would exceed
    1e-4 * mean(diagonal).
    """
    raw = np.asarray(getval(m), dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise NonFinite("matrix passed to Cholesky has NaN/Inf entries")
    if base_jitter < 0:
        raise ValueError("base_jitter must be nonnegative")

    n = raw.shape[0]
    mean_diag = float(np.mean(np.diag(raw)))
    cap = MAX_RELATIVE_JITTER * (mean_diag if mean_diag > 0 else 1.0)
    eye = np.eye(n)
    jitter = float(base_jitter)
    while True:
        try:
            lower = anp.linalg.cholesky(m + jitter * eye if jitter > 0 else m)
            if jitter > base_jitter:
                _log.debug(f"Cholesky of order {n} needed jitter {jitter:.3e} (base {base_jitter:.3e})")
            return CholFactor(lower=lower, jitter_used=jitter)
        except np.linalg.LinAlgError:
            pass
        jitter = jitter * JITTER_GROWTH if jitter > 0 else _first_jitter(mean_diag)
        if jitter > cap:
            raise NotPositiveDefinite(
                f"matrix of order {n} not positive definite with jitter up to {cap:.3e}"
            )


def solve_lower(f: CholFactor, b: Any) -> Any:
    """L^{-1} b."""
    _check_conform(f, b)
    return solve_triangular(f.lower, b, lower=True)


def chol_solve(f: CholFactor, b: Any) -> Any:
    """Solve (L L^T) X = b with two triangular solves."""
    half = solve_lower(f, b)
    return solve_triangular(anp.transpose(f.lower), half, lower=False)


def logdet(f: CholFactor) -> Any:
    return 2.0 * anp.sum(anp.log(anp.diag(f.lower)))


def _check_conform(f: CholFactor, b: Any) -> None:
    shape = np.shape(getval(b))
    rows = shape[0] if shape else None
    if rows != f.order:
        raise DimensionMismatch(f"right-hand side has {rows} rows, factor has order {f.order}")


def symmetrize(m: Any) -> Any:
    return 0.5 * (m + anp.transpose(m))


def softplus(x: Any) -> Any:
    return anp.logaddexp(0.0, x)


def softplus_inverse(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    # log(expm1(y)) loses precision for large y, where the inverse is ~y
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_seeds(seed: int, count: int) -> List[int]:
    """Independent child seeds for parallel work (restarts, folds)."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
