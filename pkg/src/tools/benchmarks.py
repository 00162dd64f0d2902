"""
Synthetic benchmark datasets on uniform grids.

single: x1, x2 in [0, 1], one 5-level factor t,
    y = 7 sin(2 pi x1 - pi) + c_t sin(2 pi x2 - pi),  c = (1, 13, 1.5, 9.0, 4.5)
multi:  x1, x2 in [-100, 100], two 5-level factors,
    y_k = x1 (t2 - 3)/80 + x2 (t1 - 3)/80 + prod_j cos(x_j / sqrt(j) - s_k(j)) cos(50 (t_j - 3) / sqrt(2))
    with s_1(j) = 0 and s_2(j) = (j - 1) pi / 2.

The cross term pairs each x_i with the other factor (x1 with t2, x2 with t1).
"""

from dataclasses import dataclass
from typing import Dict, Literal, Sequence, Tuple, Union

import numpy as np

from src.gp.latent_map import Dataset, MixedInputs, MixedSchema
from src.gp.numerics import make_rng
from src.utils.errors import UsageError
from src.utils.logger import get_logger


Family = Literal["single", "multi"]
NoiseLevel = Literal["none", "low", "high"]

SINGLE_COEFFICIENTS = (1.0, 13.0, 1.5, 9.0, 4.5)
N_LEVELS = 5
NOISE_PRESETS: Dict[str, Dict[str, float]] = {
    "single": {"none": 0.0, "low": 0.4, "high": 4.0},
    "multi": {"none": 0.0, "low": 0.1, "high": 1.0},
}

_log = get_logger("benchmarks")


@dataclass(frozen=True)
class NoiseSpec:
    sd: Union[float, Tuple[float, ...]] = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.sd, dtype=float) < 0):
            raise UsageError(f"noise SD must be nonnegative, got {self.sd}")

    @staticmethod
    def preset(family: Family, level: NoiseLevel, seed: int = 0) -> "NoiseSpec":
        try:
            return NoiseSpec(sd=NOISE_PRESETS[family][level], seed=seed)
        except KeyError:
            raise UsageError(f"unknown noise level {level!r} for {family} benchmark") from None

    def sample(self, n: int, n_outputs: int) -> np.ndarray:
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), (n_outputs,))
        if not np.any(sd):
            return np.zeros((n, n_outputs))
        return make_rng(self.seed).normal(size=(n, n_outputs)) * sd


def parse_grid(text: str, family: Family) -> Tuple[int, ...]:
    """'20x20x5' -> (20, 20); the factor sizes, when given, must be 5."""
    try:
        sizes = tuple(int(part) for part in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"grid must look like 20x20x5, got {text!r}") from None
    n_factors = 1 if family == "single" else 2
    if len(sizes) not in (2, 2 + n_factors) or any(s != N_LEVELS for s in sizes[2:]):
        raise UsageError(f"{family} grid is n1 x n2 x {' x '.join(['5'] * n_factors)}, got {text!r}")
    return sizes[:2]


def single_response(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Noise-free single-response function; `t` holds 0-based levels."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    coeff = np.asarray(SINGLE_COEFFICIENTS)[np.asarray(t).reshape(-1)]
    return 7.0 * np.sin(2.0 * np.pi * x[:, 0] - np.pi) + coeff * np.sin(2.0 * np.pi * x[:, 1] - np.pi)


def multi_response(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Noise-free two-output function, shape (n, 2); `t` holds 0-based levels."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    levels = np.atleast_2d(np.asarray(t)) + 1.0
    shift = levels - 3.0
    cross = x[:, 0] * shift[:, 1] / 80.0 + x[:, 1] * shift[:, 0] / 80.0
    factor_terms = np.cos(50.0 * shift / np.sqrt(2.0))
    roots = np.sqrt(np.array([1.0, 2.0]))
    phase = np.array([0.0, np.pi / 2.0])  # (j - 1) pi / 2
    y1 = cross + np.prod(np.cos(x / roots) * factor_terms, axis=1)
    y2 = cross + np.prod(np.cos(x / roots - phase) * factor_terms, axis=1)
    return np.column_stack([y1, y2])


class BenchmarkGenerator:
    def __init__(self, family: Family):
        if family not in ("single", "multi"):
            raise UsageError(f"unknown benchmark family {family!r}")
        self.family = family

    @property
    def bounds(self) -> Tuple[float, float]:
        return (0.0, 1.0) if self.family == "single" else (-100.0, 100.0)

    @property
    def n_factors(self) -> int:
        return 1 if self.family == "single" else 2

    def schema(self) -> MixedSchema:
        return MixedSchema(
            p=2,
            q=self.n_factors,
            levels=(N_LEVELS,) * self.n_factors,
            x_bounds=(self.bounds, self.bounds),
        )

    def grid_inputs(self, n1: int, n2: int) -> MixedInputs:
        """Rows ordered x1-major, then x2, then the factors; endpoints included."""
        if n1 < 2 or n2 < 2:
            raise UsageError(f"grid sizes must be >= 2, got {n1}x{n2}")
        lo, hi = self.bounds
        axes = [np.linspace(lo, hi, n1), np.linspace(lo, hi, n2)] + [np.arange(N_LEVELS)] * self.n_factors
        mesh = np.meshgrid(*axes, indexing="ij")
        columns = [m.reshape(-1) for m in mesh]
        x = np.column_stack(columns[:2])
        t = np.column_stack(columns[2:]).astype(int)
        return MixedInputs(x=x, t=t)

    def response(self, inputs: MixedInputs) -> np.ndarray:
        if self.family == "single":
            return single_response(inputs.x, inputs.t).reshape(-1, 1)
        return multi_response(inputs.x, inputs.t)

    def generate(self, grid: Sequence[int], noise: NoiseSpec) -> Dataset:
        n1, n2 = grid[0], grid[1]
        inputs = self.grid_inputs(n1, n2)
        clean = self.response(inputs)
        y = clean + noise.sample(len(inputs), clean.shape[1])
        _log.info(f"Generated {self.family} benchmark: {len(inputs)} rows, noise SD {noise.sd}")
        return Dataset(self.schema(), inputs, y)


def gen_single(grid: Sequence[int], noise: NoiseSpec) -> Dataset:
    return BenchmarkGenerator("single").generate(grid, noise)


def gen_multi(grid: Sequence[int], noise: NoiseSpec) -> Dataset:
    return BenchmarkGenerator("multi").generate(grid, noise)
