"""Survival dataset loaders.

The two study datasets load from locally cached ARFF files (the canonical
distribution format for both); a missing cache is a hard, descriptive error,
never a silent fallback. Arbitrary data loads through csv:<path> using the
same CSV contract as the explanation CLI: header row, 'time' and optional
'event' outcome columns, everything else numeric features.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["SurvivalData", "DatasetMissingError", "DatasetFormatError", "load_dataset", "default_data_dir"]

DATA_DIR_ENV = "PYMODEL_SERVER_DATA"

# canonical cache file names and outcome attribute names
_STUDIES = {
    "whas500": {
        "file": "whas500.arff",
        "time": "lenfol",
        "event": "fstat",
        "n_rows": 500,
        "n_events": 215,
    },
    "breast-cancer": {
        "file": "breast_cancer_GSE7390-metastasis.arff",
        "time": "t.tdm",
        "event": "e.tdm",
        "n_rows": 198,
        "n_events": 51,
    },
}

_TRUE_WORDS = {"1", "true", "t", "yes"}
_FALSE_WORDS = {"0", "false", "f", "no"}


class DatasetMissingError(FileNotFoundError):
    """The requested study file is not in the local cache."""


class DatasetFormatError(ValueError):
    """The file was found but does not look like the expected dataset."""


@dataclass(frozen=True)
class SurvivalData:
    tag: str
    feature_names: tuple
    X: np.ndarray
    time: np.ndarray
    event: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event.sum())


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else Path("datasets")


def load_dataset(spec: str, data_dir: str | os.PathLike | None = None) -> SurvivalData:
    if spec.startswith("csv:"):
        return _load_csv(spec[4:])
    if spec in _STUDIES:
        return _load_study(spec, Path(data_dir) if data_dir else default_data_dir())
    known = ", ".join(sorted(_STUDIES))
    raise DatasetFormatError(f"unknown dataset {spec!r}; use one of {known}, or csv:<path>")


# ---------------------------------------------------------------------------
# study ARFF files
# ---------------------------------------------------------------------------


def _load_study(tag: str, data_dir: Path) -> SurvivalData:
    study = _STUDIES[tag]
    path = data_dir / study["file"]
    if not path.exists():
        raise DatasetMissingError(
            f"dataset {tag!r} is not cached: expected {path.resolve()}; "
            f"download {study['file']} into that directory "
            f"(set ${DATA_DIR_ENV} or pass --data-dir to change the location)"
        )
    names, columns = _read_arff(path)
    if study["time"] not in names or study["event"] not in names:
        raise DatasetFormatError(
            f"{path}: expected outcome attributes {study['time']!r} and {study['event']!r}, "
            f"found {names}"
        )
    time = _to_float_column(columns[study["time"]], study["time"], path)
    event = _to_bool_column(columns[study["event"]], study["event"], path)
    feature_names = []
    feature_cols = []
    for name in names:
        if name in (study["time"], study["event"]):
            continue
        expanded = _encode_feature(name, columns[name], path)
        for col_name, col in expanded:
            feature_names.append(col_name)
            feature_cols.append(col)
    data = SurvivalData(
        tag=tag,
        feature_names=tuple(feature_names),
        X=np.column_stack(feature_cols),
        time=time,
        event=event,
    )
    if data.n_rows != study["n_rows"] or data.n_events != study["n_events"]:
        raise DatasetFormatError(
            f"{path}: expected {study['n_rows']} rows with {study['n_events']} events, "
            f"got {data.n_rows} rows with {data.n_events} events"
        )
    if not (data.time > 0).all():
        # a handful of same-day outcomes appear as 0 in some exports; survival
        # models need strictly positive times
        data = SurvivalData(
            tag=data.tag,
            feature_names=data.feature_names,
            X=data.X,
            time=np.maximum(data.time, 0.5),
            event=data.event,
        )
    return data


def _read_arff(path: Path):
    """Attribute names plus raw value columns (strings) from an ARFF file."""
    from scipy.io import arff

    try:
        raw, meta = arff.loadarff(io.StringIO(path.read_text()))
    except Exception as exc:
        raise DatasetFormatError(f"{path}: not a readable ARFF file: {exc}") from exc
    names = list(meta.names())
    columns = {}
    for name in names:
        col = raw[name]
        if col.dtype.kind == "S" or col.dtype.kind == "O":
            columns[name] = np.array([v.decode() if isinstance(v, bytes) else str(v) for v in col])
        else:
            columns[name] = np.asarray(col, dtype=float)
    return names, columns


def _to_float_column(col, name, path):
    try:
        return np.asarray(col, dtype=float)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: attribute {name!r} is not numeric: {exc}") from exc


def _to_bool_column(col, name, path):
    if col.dtype.kind == "f":
        return col > 0
    out = np.empty(col.shape[0], dtype=bool)
    for i, v in enumerate(col):
        w = str(v).strip().lower()
        if w in _TRUE_WORDS:
            out[i] = True
        elif w in _FALSE_WORDS:
            out[i] = False
        else:
            raise DatasetFormatError(f"{path}: attribute {name!r} has non-boolean value {v!r}")
    return out


def _encode_feature(name, col, path):
    """Numeric columns pass through; binary-looking nominals become 0/1;
    wider nominals expand one-hot as name=value."""
    if col.dtype.kind == "f":
        return [(name, col)]
    lowered = np.array([str(v).strip().lower() for v in col])
    values = sorted(set(lowered))
    if all(v in _TRUE_WORDS | _FALSE_WORDS for v in values):
        return [(name, np.array([1.0 if v in _TRUE_WORDS else 0.0 for v in lowered]))]
    try:
        return [(name, np.array([float(v) for v in lowered]))]
    except ValueError:
        pass
    return [(f"{name}={v}", (lowered == v).astype(float)) for v in values]


# ---------------------------------------------------------------------------
# csv
# ---------------------------------------------------------------------------


def _load_csv(path_str: str) -> SurvivalData:
    path = Path(path_str)
    if not path.exists():
        raise DatasetMissingError(f"csv dataset not found: {path.resolve()}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if "time" not in header:
            raise DatasetFormatError(f"{path}: no 'time' column in header {header}")
        time_col = header.index("time")
        event_col = header.index("event") if "event" in header else None
        feature_cols = [i for i in range(len(header)) if i not in (time_col, event_col)]
        if not feature_cols:
            raise DatasetFormatError(f"{path}: no feature columns")
        rows, times, events = [], [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(c.strip() == "" for c in record):
                continue
            try:
                rows.append([float(record[i]) for i in feature_cols])
                times.append(float(record[time_col]))
            except (ValueError, IndexError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            if event_col is not None:
                w = record[event_col].strip().lower()
                if w in _TRUE_WORDS:
                    events.append(True)
                elif w in _FALSE_WORDS:
                    events.append(False)
                else:
                    raise DatasetFormatError(f"{path}:{lineno}: bad event value {record[event_col]!r}")
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    n = len(rows)
    return SurvivalData(
        tag=path.stem,
        feature_names=tuple(header[i] for i in feature_cols),
        X=np.array(rows),
        time=np.array(times),
        event=np.array(events, dtype=bool) if event_col is not None else np.ones(n, dtype=bool),
    )
