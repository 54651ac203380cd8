"""File formats: dataset CSV, result JSON, and study config files.

The dataset CSV has header delta,time,left,right,x1,...,xk. Exact rows
(delta=1) carry time and leave left/right blank (or repeat time); censored
rows leave time blank and fill the bracket, with "-inf"/"inf" (any case,
empty cell also accepted) for open ends. Covariate columns are the
non-intercept regressors; an intercept column of ones is prepended on read.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import ValidationError

__all__ = [
    "read_dataset_csv", "write_dataset_csv", "dump_json17",
    "StudyConfig", "parse_study_config",
]

_NEG_INF_TOKENS = {"-inf", "-infinity"}
_POS_INF_TOKENS = {"inf", "+inf", "infinity", "+infinity"}


def _parse_endpoint(text: str, side: str) -> float:
    """Endpoint cell -> float; blank means the open end for that side."""
    s = text.strip().lower()
    if s == "":
        return -math.inf if side == "left" else math.inf
    if s in _NEG_INF_TOKENS:
        return -math.inf
    if s in _POS_INF_TOKENS:
        return math.inf
    return float(s)


def read_dataset_csv(path: str, log_transform: bool = False) -> Dataset:
    """Load a dataset CSV, optionally mapping times to the log scale.

    With log_transform the file holds raw nonnegative times; they are
    mapped through log, with 0 allowed only as a left endpoint (log 0 is
    taken as an open lower end). All row problems are reported together.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        fixed = ["delta", "time", "left", "right"]
        if header[:4] != fixed:
            raise ValidationError(
                f"{path}: header must start with {','.join(fixed)}, got {','.join(header[:4])}")
        cov_names = header[4:]
        expected = [f"x{i}" for i in range(1, len(cov_names) + 1)]
        if cov_names != expected:
            raise ValidationError(
                f"{path}: covariate columns must be x1..x{len(cov_names)}, got {','.join(cov_names)}")
        rows = list(reader)

    n = len(rows)
    if n == 0:
        raise ValidationError(f"{path}: no data rows")
    width = 4 + len(cov_names)
    delta = np.zeros(n)
    time = np.full(n, np.nan)
    left = np.full(n, np.nan)
    right = np.full(n, np.nan)
    covs = np.ones((n, width - 3))
    problems: list[str] = []
    for i, row in enumerate(rows, start=2):
        if len(row) != width:
            problems.append(f"row {i}: expected {width} cells, got {len(row)}")
            continue
        try:
            d = float(row[0])
            if d not in (0.0, 1.0):
                raise ValueError
            delta[i - 2] = d
        except ValueError:
            problems.append(f"row {i}: delta must be 0 or 1, got {row[0]!r}")
            continue
        try:
            if d == 1.0:
                t = float(row[1])
                lo = _parse_endpoint(row[2], "left") if row[2].strip() else t
                hi = _parse_endpoint(row[3], "right") if row[3].strip() else t
                if not (lo == t == hi):
                    problems.append(f"row {i}: exact row needs left == time == right")
                    continue
                time[i - 2] = t
                left[i - 2] = lo
                right[i - 2] = hi
            else:
                if row[1].strip():
                    problems.append(f"row {i}: censored row must leave time blank")
                    continue
                left[i - 2] = _parse_endpoint(row[2], "left")
                right[i - 2] = _parse_endpoint(row[3], "right")
        except ValueError:
            problems.append(f"row {i}: unparseable endpoint")
            continue
        try:
            covs[i - 2, 1:] = [float(c) for c in row[4:]]
        except ValueError:
            problems.append(f"row {i}: unparseable covariate")
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))

    if log_transform:
        for arr, side in ((time, None), (left, "left"), (right, "right")):
            finite = np.isfinite(arr)
            if np.any(arr[finite] < 0):
                raise ValidationError(f"{path}: negative raw times cannot be log-transformed")
            zero = finite & (arr == 0.0)
            if side == "left":
                arr[zero] = -np.inf
                finite &= ~zero
            elif np.any(zero):
                raise ValidationError(f"{path}: raw time 0 only allowed as a left endpoint")
            arr[finite] = np.log(arr[finite])

    return Dataset(delta=delta, time=time, left=left, right=right, covariates=covs)


def _endpoint_cell(v: float) -> str:
    if v == -math.inf:
        return "-inf"
    if v == math.inf:
        return "inf"
    return repr(float(v))


def write_dataset_csv(path: str, dataset: Dataset) -> None:
    """Write a dataset so read_dataset_csv round-trips it exactly."""
    k = dataset.p - 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "time", "left", "right"] + [f"x{i}" for i in range(1, k + 1)])
        for i in range(dataset.n):
            if dataset.delta[i] == 1.0:
                row = ["1", repr(float(dataset.time[i])), "", ""]
            else:
                row = ["0", "",
                       _endpoint_cell(dataset.left[i]),
                       _endpoint_cell(dataset.right[i])]
            row += [repr(float(v)) for v in dataset.covariates[i, 1:]]
            writer.writerow(row)


def _to_jsonable(obj: Any) -> Any:
    """Recursively convert to JSON types, floats via 17 significant digits."""
    if isinstance(obj, Mapping):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return float(f"{f:.17g}")
    if obj is None or isinstance(obj, str):
        return obj
    raise ValidationError(f"cannot serialize {type(obj).__name__} to JSON")


def dump_json17(obj: Any, path: str | None = None) -> str:
    """Serialize with floats at 17 significant digits (round-trip exact)."""
    text = json.dumps(_to_jsonable(obj), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


@dataclass(frozen=True)
class StudyConfig:
    """Parsed simulation-study config (see parse_study_config)."""

    n: int = 200
    tau: float = 0.5
    error: str = "ev"
    hetero: str = "m1"
    scheme: str = "pic"
    p0: float | None = None
    censoring_target: float = 0.5
    seed: int = 0
    replicates: int = 200
    bootstrap: int = 0
    ci_level: float = 0.95
    estimators: tuple[str, ...] = ("ks",)
    bandwidth: float | None = None
    m_star: float | None = None
    label: str = "study"


_CONFIG_KEYS = {
    "n": int, "tau": float, "error": str, "hetero": str, "scheme": str,
    "p0": float, "censoring_target": float, "seed": int, "replicates": int,
    "bootstrap": int, "ci_level": float, "estimators": str,
    "bandwidth": float, "m_star": float, "label": str,
}


def parse_study_config(path: str) -> StudyConfig:
    """Parse a key=value config file; '#' comments, blank lines ignored.

    p0=auto (or omitting it) requests calibration. estimators is a comma
    list drawn from ks, zfd. All errors are collected and reported at once.
    """
    values: dict[str, Any] = {}
    problems: list[str] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                problems.append(f"line {lineno}: expected key=value, got {line!r}")
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_KEYS:
                problems.append(f"line {lineno}: unknown key {key!r}")
                continue
            if key in values:
                problems.append(f"line {lineno}: duplicate key {key!r}")
                continue
            if key == "p0" and val.lower() == "auto":
                values[key] = None
                continue
            if key == "estimators":
                names = tuple(s.strip() for s in val.split(",") if s.strip())
                bad = [s for s in names if s not in ("ks", "zfd")]
                if bad or not names:
                    problems.append(f"line {lineno}: estimators must be from ks, zfd")
                else:
                    values[key] = names
                continue
            try:
                values[key] = _CONFIG_KEYS[key](val)
            except ValueError:
                problems.append(f"line {lineno}: bad value {val!r} for {key}")
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))
    return StudyConfig(**values)
