"""CSV ingestion of unlabeled observations for the self-consistency loss."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError

AR1_COLUMNS = ("country", "year", "passengers_diff", "household_debt", "gdp_per_capita")


@dataclass
class UnlabeledSet:
    """Observations of shape ``(M, ...)`` with one identifier per observation."""

    observations: np.ndarray
    ids: list
    scaling: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.observations)


def _read_rows(path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"unlabeled data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in reader.fieldnames]
        rows = list(reader)
    return header, rows


def _number(row: dict, col: str, line: int) -> float:
    raw = row.get(col)
    if raw is None or raw.strip() == "":
        raise DataError(f"row {line}, column {col!r}: missing value")
    try:
        v = float(raw)
    except ValueError:
        raise DataError(f"row {line}, column {col!r}: not a number ({raw!r})") from None
    if not math.isfinite(v):
        raise DataError(f"row {line}, column {col!r}: non-finite value")
    return v


def _standardize(a: np.ndarray, name: str) -> tuple[np.ndarray, float, float]:
    mean, sd = float(a.mean()), float(a.std())
    if sd == 0:
        raise DataError(f"column {name!r} is constant across the pool; cannot standardize")
    return (a - mean) / sd, mean, sd


def ingest_ar1_csv(path) -> UnlabeledSet:
    """Countries as ``(M, T+1, 3)`` observations with columns ``(y, u, w)``.

    Covariates are standardized over the pooled rows; the target is divided by
    its pooled standard deviation (not centred, so a zero difference stays zero).
    """
    header, rows = _read_rows(path)
    for col in AR1_COLUMNS:
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    series: dict[str, list] = {}
    for i, row in enumerate(rows, start=2):
        row = {k.strip(): v for k, v in row.items() if k is not None}
        country = (row.get("country") or "").strip()
        if not country:
            raise DataError(f"row {i}, column 'country': missing value")
        year = _number(row, "year", i)
        vals = [_number(row, c, i) for c in AR1_COLUMNS[2:]]
        prev = series.setdefault(country, [])
        if prev and year <= prev[-1][0]:
            raise DataError(f"row {i}: years for {country!r} are not strictly increasing "
                            f"({prev[-1][0]:g} then {year:g})")
        prev.append((year, *vals))
    if not series:
        raise DataError(f"{path}: no data rows")
    lengths = {len(v) for v in series.values()}
    if len(lengths) != 1:
        raise DataError(f"{path}: all countries need the same number of years, got "
                        f"{sorted(lengths)}")
    if lengths.pop() < 2:
        raise DataError(f"{path}: each country needs at least two years")
    ids = list(series)
    arr = np.array([[r[1:] for r in series[c]] for c in ids], dtype=np.float64)
    y_sd = float(arr[:, :, 0].std())
    if y_sd == 0:
        raise DataError("column 'passengers_diff' is constant across the pool")
    arr[:, :, 0] /= y_sd
    u, u_mean, u_sd = _standardize(arr[:, :, 1], "household_debt")
    w, w_mean, w_sd = _standardize(arr[:, :, 2], "gdp_per_capita")
    arr[:, :, 1], arr[:, :, 2] = u, w
    scaling = {"passengers_diff_sd": y_sd, "household_debt_mean": u_mean,
               "household_debt_sd": u_sd, "gdp_per_capita_mean": w_mean,
               "gdp_per_capita_sd": w_sd}
    return UnlabeledSet(arr, ids, scaling)


def ingest_gaussian_csv(path, D: int | None = None) -> UnlabeledSet:
    """Rows ``obs,point,x_0..x_{D-1}``; returns ``(M, K, D)``."""
    header, rows = _read_rows(path)
    for col in ("obs", "point"):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    xcols = sorted((h for h in header if h.startswith("x_")), key=lambda h: int(h[2:]))
    if not xcols or [int(h[2:]) for h in xcols] != list(range(len(xcols))):
        raise DataError(f"{path}: expected columns x_0..x_<D-1>")
    if D is not None and len(xcols) != D:
        raise DataError(f"{path}: file has {len(xcols)} dimensions, model expects {D}")
    groups: dict[str, list] = {}
    for i, row in enumerate(rows, start=2):
        row = {k.strip(): v for k, v in row.items() if k is not None}
        obs = (row.get("obs") or "").strip()
        if not obs:
            raise DataError(f"row {i}, column 'obs': missing value")
        point = _number(row, "point", i)
        prev = groups.setdefault(obs, [])
        if point != len(prev):
            raise DataError(f"row {i}: point index {point:g} for obs {obs!r}, "
                            f"expected {len(prev)}")
        prev.append([_number(row, c, i) for c in xcols])
    if not groups:
        raise DataError(f"{path}: no data rows")
    sizes = {len(v) for v in groups.values()}
    if len(sizes) != 1:
        raise DataError(f"{path}: observations have differing point counts {sorted(sizes)}")
    return UnlabeledSet(np.array(list(groups.values()), dtype=np.float64), list(groups))


def ingest_unlabeled_csv(path, task: str, **kwargs) -> UnlabeledSet:
    if task == "ar1":
        return ingest_ar1_csv(path)
    if task == "gaussian":
        return ingest_gaussian_csv(path, **kwargs)
    raise ConfigError(f"unknown task {task!r}")
