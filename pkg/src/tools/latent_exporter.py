from dataclasses import dataclass
from typing import Any, List, Tuple

import numpy as np
import pandas as pd

from src.gp.exact_gp import ExactModel
from src.gp.latent_map import CollinearityReport, LatentMap, MixedSchema, canonicalize, collinearity_report
from src.gp.lmc import LMCModel
from src.gp.prediction import PerOutputModel
from src.gp.svgp import SVModel
from src.utils.logger import get_logger


COLLINEARITY_COLUMNS = ["variable", "copy", "explained_fraction", "ordering", "reversed"]


@dataclass
class LatentRecord:
    variable: int  # 1-based
    level: int  # 1-based
    label: str
    copy: int  # 1-based latent function (LMC) or output (per-output models)
    coords: Tuple[float, ...]


class LatentExporter:
    """
    Tables describing the learned latent spaces of a fitted model: one row per
    (variable, level, copy), the inducing locations split into x and per-variable latent
    blocks, and a collinearity summary per variable and copy.
    """

    def __init__(self, model: Any, canonical: bool = True):
        self._model = model
        self._canonical = canonical
        self._log = get_logger("latent_exporter")

    @property
    def schema(self) -> MixedSchema:
        return self._model.schema

    def latent_maps(self) -> List[Tuple[int, LatentMap]]:
        """(copy offset, map) pairs; per-output models contribute one map each."""
        if isinstance(self._model, PerOutputModel):
            return [(o, m.latent) for o, m in enumerate(self._model.models)]
        return [(0, self._model.latent)]

    def _prepared(self, latent: LatentMap) -> LatentMap:
        if not self._canonical:
            return latent
        if latent.g != 2:
            self._log.warning(f"canonical orientation needs g=2; exporting raw g={latent.g} coordinates")
            return latent
        return canonicalize(latent)

    def records(self) -> List[LatentRecord]:
        out: List[LatentRecord] = []
        for offset, latent in self.latent_maps():
            prepared = self._prepared(latent)
            for j, values in enumerate(prepared.values):
                for c in range(values.shape[0]):
                    for level in range(values.shape[1]):
                        out.append(
                            LatentRecord(
                                variable=j + 1,
                                level=level + 1,
                                label=self.schema.label(j, level),
                                copy=offset + c + 1,
                                coords=tuple(float(v) for v in values[c, level]),
                            )
                        )
        return out

    def to_dataframe(self) -> pd.DataFrame:
        records = self.records()
        g = max((len(r.coords) for r in records), default=0)
        columns = ["variable", "level", "label", "copy"] + [f"z_{d + 1}" for d in range(g)]
        rows = []
        for r in records:
            row = {"variable": r.variable, "level": r.level, "label": r.label, "copy": r.copy}
            row.update({f"z_{d + 1}": v for d, v in enumerate(r.coords)})
            rows.append(row)
        return pd.DataFrame(rows, columns=columns)

    def inducing_sets(self) -> List[Tuple[int, np.ndarray]]:
        model = self._model
        if isinstance(model, PerOutputModel):
            models = model.models
        else:
            models = [model]
        out: List[Tuple[int, np.ndarray]] = []
        for o, m in enumerate(models):
            if isinstance(m, SVModel):
                out.append((o + 1, m.inducing.locations))
            elif isinstance(m, LMCModel):
                for l in range(m.n_functions):
                    out.append((l + 1, m.state.inducing_for(l).locations))
            elif isinstance(m, ExactModel):
                self._log.info("Dense models have no inducing points; skipping")
        return out

    def inducing_dataframe(self) -> pd.DataFrame:
        """
        Inducing locations in the (uncanonicalized) transformed space of their function, so they
        can be overlaid on a raw latent export.
        """
        p, q = self.schema.p, self.schema.q
        maps = self.latent_maps()
        g = maps[0][1].g
        columns = ["function", "index"] + [f"x_{i + 1}" for i in range(p)]
        columns += [f"t_{j + 1}_z_{d + 1}" for j in range(q) for d in range(g)]
        frames = []
        for function, locations in self.inducing_sets():
            frame = pd.DataFrame(locations, columns=columns[2:])
            frame.insert(0, "index", np.arange(1, len(locations) + 1))
            frame.insert(0, "function", function)
            frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=columns)
        return pd.concat(frames, ignore_index=True)

    def collinearity(self) -> List[CollinearityReport]:
        reports = []
        for offset, latent in self.latent_maps():
            for j in range(len(latent.values)):
                for c in range(latent.copies):
                    report = collinearity_report(latent, j, c)
                    if offset:
                        report = CollinearityReport(
                            report.variable, report.copy + offset, report.explained_fraction, report.ordering, report.reversed
                        )
                    self._log.info(
                        f"t_{report.variable} copy {report.copy}: explained {report.explained_fraction:.3f}, "
                        f"ordering {'-'.join(map(str, report.ordering))}"
                    )
                    reports.append(report)
        return reports

    def collinearity_dataframe(self) -> pd.DataFrame:
        rows = [
            {
                "variable": r.variable,
                "copy": r.copy,
                "explained_fraction": r.explained_fraction,
                "ordering": "-".join(str(o) for o in r.ordering),
                "reversed": r.reversed,
            }
            for r in self.collinearity()
        ]
        return pd.DataFrame(rows, columns=COLLINEARITY_COLUMNS)
