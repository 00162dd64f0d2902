"""
Categorical-to-latent mapping.

Mixed inputs u = [x, t] are encoded into the quantitative space s = [x, z_1(t_1), ..., z_q(t_q)],
where z_j(c) is a learned g-dimensional vector per level c of categorical variable j.
Level indices are 1-based at the edges (CSV, MixedPoint, reports) and 0-based in arrays.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import autograd.numpy as anp
import numpy as np

from src.utils.errors import DimensionMismatch, LevelOutOfRange
from src.utils.logger import get_logger


Structure = Literal["shared", "independent"]
DEFAULT_LATENT_DIM = 2

_log = get_logger("latent_map")


@dataclass(frozen=True)
class MixedSchema:
    p: int
    q: int
    levels: Tuple[int, ...]
    level_labels: Optional[Tuple[Tuple[str, ...], ...]] = None
    # Observed range of each quantitative column; used for probe points and reports only.
    x_bounds: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self) -> None:
        if self.p < 0 or self.q < 0 or self.p + self.q < 1:
            raise ValueError(f"invalid schema sizes p={self.p}, q={self.q}")
        if len(self.levels) != self.q:
            raise ValueError(f"expected {self.q} level counts, got {len(self.levels)}")
        if any(l < 2 for l in self.levels):
            raise ValueError(f"every categorical variable needs at least 2 levels: {self.levels}")
        if self.level_labels is not None:
            if len(self.level_labels) != self.q or any(
                len(labels) != l for labels, l in zip(self.level_labels, self.levels)
            ):
                raise ValueError("level_labels must give one label per level")

    def label(self, variable: int, level: int) -> str:
        """Label of a 0-based (variable, level); falls back to the 1-based level number."""
        if self.level_labels is None:
            return str(level + 1)
        return self.level_labels[variable][level]

    def encoded_width(self, latent_dim: int) -> int:
        return self.p + self.q * latent_dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "q": self.q,
            "levels": list(self.levels),
            "level_labels": [list(ls) for ls in self.level_labels] if self.level_labels else None,
            "x_bounds": [list(b) for b in self.x_bounds] if self.x_bounds else None,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "MixedSchema":
        labels = data.get("level_labels")
        bounds = data.get("x_bounds")
        return MixedSchema(
            p=int(data["p"]),
            q=int(data["q"]),
            levels=tuple(int(l) for l in data["levels"]),
            level_labels=tuple(tuple(str(s) for s in ls) for ls in labels) if labels else None,
            x_bounds=tuple((float(lo), float(hi)) for lo, hi in bounds) if bounds else None,
        )


@dataclass(frozen=True)
class MixedPoint:
    x: Tuple[float, ...]
    t: Tuple[int, ...]  # 1-based levels


@dataclass
class MixedInputs:
    """A batch of mixed points as arrays: x (n, p) float, t (n, q) 0-based int."""

    x: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.t = np.asarray(self.t, dtype=int)
        if self.x.ndim == 1:
            self.x = self.x.reshape(-1, 1)
        if self.t.ndim == 1:
            self.t = self.t.reshape(-1, 1)
        if self.x.shape[0] != self.t.shape[0]:
            raise DimensionMismatch(f"x has {self.x.shape[0]} rows but t has {self.t.shape[0]}")

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @staticmethod
    def from_points(points: Sequence[MixedPoint], schema: MixedSchema) -> "MixedInputs":
        x = np.array([p.x for p in points], dtype=float).reshape(len(points), schema.p)
        t = np.array([p.t for p in points], dtype=int).reshape(len(points), schema.q) - 1
        return MixedInputs(x=x, t=t)

    def subset(self, idx: np.ndarray) -> "MixedInputs":
        return MixedInputs(x=self.x[idx], t=self.t[idx])

    def check(self, schema: MixedSchema) -> None:
        if self.x.shape[1] != schema.p or self.t.shape[1] != schema.q:
            raise DimensionMismatch(
                f"inputs have p={self.x.shape[1]}, q={self.t.shape[1]}; schema expects p={schema.p}, q={schema.q}"
            )
        if not np.all(np.isfinite(self.x)):
            raise DimensionMismatch("quantitative inputs must be finite")
        for j, l_j in enumerate(schema.levels):
            col = self.t[:, j]
            if col.size and (col.min() < 0 or col.max() >= l_j):
                bad = int(col[(col < 0) | (col >= l_j)][0]) + 1
                raise LevelOutOfRange(f"t_{j + 1} has level {bad}; valid levels are 1..{l_j}")


@dataclass(frozen=True)
class Normalization:
    """Per-column z-score record; `inverse` maps back to original response units."""

    mean: np.ndarray
    scale: np.ndarray

    @staticmethod
    def fit(y: np.ndarray) -> "Normalization":
        y = np.asarray(y, dtype=float)
        mean = y.mean(axis=0)
        std = y.std(axis=0)
        return Normalization(mean=mean, scale=np.where(std > 0, std, 1.0))

    @staticmethod
    def identity(n_outputs: int) -> "Normalization":
        return Normalization(mean=np.zeros(n_outputs), scale=np.ones(n_outputs))

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.mean) / self.scale

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.scale + self.mean

    def inverse_variance(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) * self.scale**2

    def column(self, j: int) -> "Normalization":
        return Normalization(mean=self.mean[j : j + 1].copy(), scale=self.scale[j : j + 1].copy())

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "Normalization":
        return Normalization(mean=np.asarray(data["mean"], dtype=float), scale=np.asarray(data["scale"], dtype=float))


@dataclass
class Dataset:
    schema: MixedSchema
    inputs: MixedInputs
    outputs: np.ndarray  # (n, N_op)
    normalization: Normalization = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.outputs = np.asarray(self.outputs, dtype=float).reshape(len(self.inputs), -1)
        if len(self.inputs) < 1 or self.outputs.shape[1] < 1:
            raise ValueError("dataset needs at least one row and one output")
        self.inputs.check(self.schema)
        if self.normalization is None:
            self.normalization = Normalization.identity(self.n_outputs)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def n_outputs(self) -> int:
        return int(self.outputs.shape[1])

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.schema, self.inputs.subset(idx), self.outputs[idx], self.normalization)

    def column(self, j: int) -> "Dataset":
        return Dataset(self.schema, self.inputs, self.outputs[:, j : j + 1], self.normalization.column(j))

    def normalized(self) -> "Dataset":
        """z-scored copy; the stored record inverts back to this dataset's units."""
        norm = Normalization.fit(self.outputs)
        return Dataset(self.schema, self.inputs, norm.transform(self.outputs), norm)

    def original_outputs(self) -> np.ndarray:
        return self.normalization.inverse(self.outputs)


def encode_arrays(x: np.ndarray, t: np.ndarray, z: Sequence[Any], copy: int = 0) -> Any:
    """
    Row i is [x_i, z_1[copy][t_i1], ..., z_q[copy][t_iq]].
    `z[j]` has shape (copies, l_j, g); arrays may be autograd-traced.
    """
    blocks = [x] + [z[j][copy][t[:, j]] for j in range(t.shape[1])]
    if len(blocks) == 1:
        return x
    return anp.concatenate(blocks, axis=1)


@dataclass
class LatentMap:
    g: int
    structure: Structure
    # values[j] has shape (copies, l_j, g)
    values: List[np.ndarray]

    def __post_init__(self) -> None:
        self.values = [np.asarray(v, dtype=float) for v in self.values]
        if self.structure not in ("shared", "independent"):
            raise ValueError(f"unknown latent structure {self.structure!r}")
        copies = {v.shape[0] for v in self.values}
        if len(copies) > 1:
            raise ValueError("all categorical variables must store the same number of copies")
        if self.structure == "shared" and copies and copies != {1}:
            raise ValueError("shared structure stores exactly one latent copy")
        for v in self.values:
            if v.ndim != 3 or v.shape[2] != self.g:
                raise ValueError(f"latent values must have shape (copies, levels, {self.g})")
            if not np.all(np.isfinite(v)):
                raise ValueError("latent vectors must be finite")

    @property
    def copies(self) -> int:
        return int(self.values[0].shape[0]) if self.values else 1

    @staticmethod
    def random(
        schema: MixedSchema,
        rng: np.random.Generator,
        g: int = DEFAULT_LATENT_DIM,
        structure: Structure = "shared",
        copies: int = 1,
    ) -> "LatentMap":
        n_copies = 1 if structure == "shared" else copies
        values = [rng.uniform(-0.5, 0.5, size=(n_copies, l_j, g)) for l_j in schema.levels]
        return LatentMap(g=g, structure=structure, values=values)

    def copy_index(self, function: int) -> int:
        """Latent copy used by LMC latent function `function` (0-based)."""
        if self.structure == "shared":
            return 0
        if not 0 <= function < self.copies:
            raise DimensionMismatch(f"latent copy {function} out of range for {self.copies} copies")
        return function

    def encode_batch(self, inputs: MixedInputs, schema: MixedSchema, copy: int = 0) -> np.ndarray:
        inputs.check(schema)
        if len(self.values) != schema.q:
            raise DimensionMismatch(f"latent map has {len(self.values)} variables; schema has q={schema.q}")
        return encode_arrays(inputs.x, inputs.t, self.values, self.copy_index(copy))

    def with_values(self, values: Sequence[np.ndarray]) -> "LatentMap":
        return replace(self, values=[np.asarray(v, dtype=float) for v in values])

    def to_dict(self) -> Dict[str, Any]:
        return {"g": self.g, "structure": self.structure, "values": [v.tolist() for v in self.values]}

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "LatentMap":
        return LatentMap(g=int(data["g"]), structure=data["structure"], values=[np.asarray(v, dtype=float) for v in data["values"]])


def _canonical_levels(points: np.ndarray) -> np.ndarray:
    out = points - points[0]
    if len(out) < 2:
        return out
    a, b = out[1]
    r = float(np.hypot(a, b))
    if r == 0.0:
        return out
    c, s = a / r, b / r
    rotated = np.column_stack([c * out[:, 0] + s * out[:, 1], -s * out[:, 0] + c * out[:, 1]])
    rotated[0] = 0.0
    rotated[1] = (r, 0.0)
    if len(rotated) > 2 and rotated[2, 1] < 0:
        rotated[:, 1] = -rotated[:, 1]
    return rotated


def canonicalize(latent: LatentMap) -> LatentMap:
    """
    Remove the rigid-motion ambiguity of a 2D latent map: per variable and copy, level 1 goes
    to the origin, level 2 onto the nonnegative first axis, level 3 into the upper half-plane.
    Pairwise distances are preserved. Applied at export/report time only.
    """
    if latent.g != 2:
        raise ValueError(f"canonicalize supports g=2 latent spaces, got g={latent.g}")
    values = []
    for v in latent.values:
        values.append(np.stack([_canonical_levels(v[c]) for c in range(v.shape[0])]))
    return latent.with_values(values)


@dataclass(frozen=True)
class CollinearityReport:
    variable: int  # 1-based
    copy: int  # 1-based
    explained_fraction: float
    ordering: Tuple[int, ...]  # 1-based levels sorted along the first principal axis
    reversed: bool


def collinearity_report(latent: LatentMap, variable: int, copy: int = 0) -> CollinearityReport:
    """
    Share of the latent vectors' variance on their first principal axis, and the level order
    along that axis. `variable` and `copy` are 0-based. The ordering is reported with its first
    level lower-numbered than its last; `reversed` says whether that required flipping the axis.
    """
    points = latent.values[variable][latent.copy_index(copy)]
    centered = points - points.mean(axis=0)
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    total = float(np.sum(sing**2))
    if total <= 0.0:
        return CollinearityReport(variable + 1, copy + 1, 1.0, tuple(range(1, len(points) + 1)), False)
    axis = vt[0]
    axis = axis if axis[np.argmax(np.abs(axis))] > 0 else -axis
    order = np.argsort(centered @ axis, kind="stable") + 1
    flipped = bool(order[0] > order[-1])
    if flipped:
        order = order[::-1]
    return CollinearityReport(
        variable=variable + 1,
        copy=copy + 1,
        explained_fraction=float(sing[0] ** 2 / total),
        ordering=tuple(int(o) for o in order),
        reversed=flipped,
    )
