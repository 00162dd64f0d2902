import os
import re
import tempfile
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from src.gp.latent_map import Dataset, MixedInputs, MixedSchema
from src.utils.errors import LevelOutOfRange, MalformedCsv


PARQUET_SUFFIXES = {".parquet", ".pq"}
_COLUMN = re.compile(r"^([xty])_(\d+)$")


def _atomic_target(output: Path) -> Path:
    output.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{output.name}.", suffix=".tmp", dir=output.parent)
    os.close(fd)
    return Path(tmp)


def write_dataframe(df: pd.DataFrame, output: Path) -> None:
    """Write CSV (default) or Parquet by suffix; the file appears atomically."""
    tmp = _atomic_target(output)
    try:
        if output.suffix.lower() in PARQUET_SUFFIXES:
            df.to_parquet(tmp, index=False)
        else:
            df.to_csv(tmp, index=False, float_format="%.17g")
        os.replace(tmp, output)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_text(text: str, output: Path) -> None:
    tmp = _atomic_target(output)
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, output)
    finally:
        if tmp.exists():
            tmp.unlink()


def read_dataframe(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if path.suffix.lower() in PARQUET_SUFFIXES:
        return pd.read_parquet(path)
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise MalformedCsv(f"cannot parse {path.name}: {e}") from e
    except pd.errors.EmptyDataError:
        raise MalformedCsv(f"{path.name} is empty", row=1) from None


def _split_columns(df: pd.DataFrame) -> Tuple[List[str], List[str], List[str]]:
    groups = {"x": [], "t": [], "y": []}
    for col in df.columns:
        match = _COLUMN.match(str(col).strip())
        if not match:
            raise MalformedCsv("unexpected header; columns must be x_1.., t_1.., y_1..", row=1, column=str(col))
        groups[match.group(1)].append(str(col))
    for prefix, cols in groups.items():
        expected = [f"{prefix}_{i}" for i in range(1, len(cols) + 1)]
        if [c.strip() for c in cols] != expected:
            raise MalformedCsv(f"{prefix} columns must be numbered {', '.join(expected)}", row=1, column=cols[0])
    return groups["x"], groups["t"], groups["y"]


def _numeric(df: pd.DataFrame, col: str) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        # header is line 1
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise MalformedCsv(f"not a finite number: {df[col].iloc[row - 2]!r}", row=row, column=col)
    return values.to_numpy(dtype=float)


def _levels(df: pd.DataFrame, col: str) -> np.ndarray:
    values = _numeric(df, col)
    fractional = values != np.round(values)
    if fractional.any():
        row = int(np.flatnonzero(fractional)[0]) + 2
        raise MalformedCsv(f"categorical level must be an integer, got {df[col].iloc[row - 2]!r}", row=row, column=col)
    below = np.flatnonzero(values < 1)
    if below.size:
        raise LevelOutOfRange(f"{col} has level {int(values[below[0]])} at row {below[0] + 2}; levels start at 1")
    return values.astype(int)


def read_inputs(path: Path, schema: Optional[MixedSchema] = None) -> Tuple[MixedInputs, Optional[np.ndarray], MixedSchema]:
    """
    Parse a mixed-input table. Responses are optional (query files). Without a schema the level
    counts are inferred from the largest level seen per factor.
    """
    df = read_dataframe(path)
    if len(df) == 0:
        raise MalformedCsv(f"{path.name} has no data rows", row=2)
    x_cols, t_cols, y_cols = _split_columns(df)
    x = np.column_stack([_numeric(df, c) for c in x_cols]) if x_cols else np.zeros((len(df), 0))
    t1 = np.column_stack([_levels(df, c) for c in t_cols]) if t_cols else np.zeros((len(df), 0), dtype=int)
    y = np.column_stack([_numeric(df, c) for c in y_cols]) if y_cols else None
    if schema is None:
        levels = tuple(max(int(t1[:, j].max()), 2) for j in range(t1.shape[1]))
        bounds = tuple((float(x[:, i].min()), float(x[:, i].max())) for i in range(x.shape[1]))
        schema = MixedSchema(p=x.shape[1], q=t1.shape[1], levels=levels, x_bounds=bounds)
    elif len(x_cols) != schema.p or len(t_cols) != schema.q:
        raise MalformedCsv(f"expected {schema.p} x and {schema.q} t columns, got {len(x_cols)} and {len(t_cols)}", row=1)
    for j, l_j in enumerate(schema.levels):
        over = np.flatnonzero(t1[:, j] > l_j)
        if over.size:
            raise LevelOutOfRange(f"t_{j + 1} has level {t1[over[0], j]} at row {over[0] + 2}; valid levels are 1..{l_j}")
    return MixedInputs(x=x, t=t1 - 1), y, schema


def read_dataset(path: Path, schema: Optional[MixedSchema] = None) -> Dataset:
    inputs, y, schema = read_inputs(path, schema)
    if y is None:
        raise MalformedCsv(f"{path.name} has no response columns y_1..", row=1)
    return Dataset(schema, inputs, y)


def dataset_frame(inputs: MixedInputs, y: Optional[np.ndarray] = None) -> pd.DataFrame:
    data = {}
    for i in range(inputs.x.shape[1]):
        data[f"x_{i + 1}"] = inputs.x[:, i]
    for j in range(inputs.t.shape[1]):
        data[f"t_{j + 1}"] = inputs.t[:, j] + 1
    if y is not None:
        for o in range(y.shape[1]):
            data[f"y_{o + 1}"] = y[:, o]
    return pd.DataFrame(data)


def write_dataset(dataset: Dataset, output: Path) -> None:
    write_dataframe(dataset_frame(dataset.inputs, dataset.original_outputs()), output)
