"""CSV serialization for datasets, matrices, and experiment results.

All files are UTF-8 with LF line endings and '.' decimal separators.
Metadata travels in leading comment lines of the form ``# key=value``.
Floats are written with repr (shortest round-trip form) so reruns of a
seeded experiment produce byte-identical files.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import FewShotSet, MetaTrainSet
from .linalg import ValidationError

__all__ = [
    "ResultRow",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_meta_train_csv",
    "read_meta_train_csv",
    "write_few_shot_csv",
    "read_few_shot_csv",
    "write_results_csv",
]


@dataclass(frozen=True)
class ResultRow:
    """One (sweep point, method) measurement of an experiment runner."""

    sweep_value: float
    method: str
    value: float
    stderr: float
    wall_time_ms: float
    seed: int

    def __post_init__(self) -> None:
        if self.stderr < 0:
            raise ValidationError("stderr must be nonnegative")


def _open_write(path: str | Path):
    return open(path, "w", encoding="utf-8", newline="\n")


def _write_metadata(fh, metadata: dict | None) -> None:
    for key, val in (metadata or {}).items():
        fh.write(f"# {key}={val}\n")


def _read_lines(path: str | Path) -> tuple[dict, list[str]]:
    meta: dict[str, str] = {}
    rows: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    meta[key.strip()] = val.strip()
            else:
                rows.append(line)
    return meta, rows


def write_matrix_csv(path: str | Path, mat: np.ndarray, metadata: dict | None = None) -> None:
    """d rows of comma-separated floats, after metadata comments."""
    mat = np.asarray(mat, dtype=float)
    with _open_write(path) as fh:
        _write_metadata(fh, metadata)
        for row in np.atleast_2d(mat):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path: str | Path) -> tuple[np.ndarray, dict]:
    meta, rows = _read_lines(path)
    mat = np.array([[float(v) for v in r.split(",")] for r in rows])
    return mat, meta


# Dataset layout (documented also in the CLI module):
#   columns: record, task_index, sample_index, y, x0 .. x{d-1}
#   record "task_vector": the x-columns hold the task coefficients,
#       sample_index is -1 and y is 0.0 (unused);
#   record "sample": one labeled observation of the given task.
_DATA_HEADER = ["record", "task_index", "sample_index", "y"]


def _feature_header(d: int) -> list[str]:
    return _DATA_HEADER + [f"x{i}" for i in range(d)]


def write_meta_train_csv(
    path: str | Path, data: MetaTrainSet, metadata: dict | None = None
) -> None:
    with _open_write(path) as fh:
        _write_metadata(
            fh,
            {"d": data.d, "T": data.T, "n1": data.n1, **(metadata or {})},
        )
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_feature_header(data.d))
        for i in range(data.T):
            writer.writerow(
                ["task_vector", i, -1, repr(0.0)] + [repr(float(v)) for v in data.tasks[i]]
            )
            for j in range(data.n1):
                writer.writerow(
                    ["sample", i, j, repr(float(data.labels[i, j]))]
                    + [repr(float(v)) for v in data.features[i, j]]
                )


def read_meta_train_csv(path: str | Path) -> tuple[MetaTrainSet, dict]:
    meta, rows = _read_lines(path)
    reader = csv.reader(_io.StringIO("\n".join(rows)))
    header = next(reader)
    d = len(header) - len(_DATA_HEADER)
    tasks: dict[int, np.ndarray] = {}
    samples: dict[tuple[int, int], tuple[float, np.ndarray]] = {}
    for rec in reader:
        kind, ti, si, y = rec[0], int(rec[1]), int(rec[2]), float(rec[3])
        x = np.array([float(v) for v in rec[4:]])
        if kind == "task_vector":
            tasks[ti] = x
        else:
            samples[(ti, si)] = (y, x)
    T = len(tasks)
    n1 = max(si for (_, si) in samples) + 1
    task_arr = np.stack([tasks[i] for i in range(T)])
    feats = np.empty((T, n1, d))
    labels = np.empty((T, n1))
    for (ti, si), (y, x) in samples.items():
        feats[ti, si] = x
        labels[ti, si] = y
    return MetaTrainSet(tasks=task_arr, features=feats, labels=labels), meta


def write_few_shot_csv(
    path: str | Path, data: FewShotSet, metadata: dict | None = None
) -> None:
    with _open_write(path) as fh:
        _write_metadata(fh, {"d": data.d, "n2": data.n2, **(metadata or {})})
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_feature_header(data.d))
        writer.writerow(
            ["task_vector", 0, -1, repr(0.0)] + [repr(float(v)) for v in data.beta_star]
        )
        for j in range(data.n2):
            writer.writerow(
                ["sample", 0, j, repr(float(data.labels[j]))]
                + [repr(float(v)) for v in data.features[j]]
            )


def read_few_shot_csv(path: str | Path) -> tuple[FewShotSet, dict]:
    meta, rows = _read_lines(path)
    reader = csv.reader(_io.StringIO("\n".join(rows)))
    next(reader)
    beta = None
    feats, labels = [], []
    for rec in reader:
        x = np.array([float(v) for v in rec[4:]])
        if rec[0] == "task_vector":
            beta = x
        else:
            labels.append(float(rec[3]))
            feats.append(x)
    return (
        FewShotSet(beta_star=beta, features=np.stack(feats), labels=np.array(labels)),
        meta,
    )


def write_results_csv(
    path: str | Path,
    rows: list[ResultRow],
    metadata: dict | None = None,
    columns: tuple[str, ...] = ("sweep_value", "method", "value", "stderr", "seed"),
) -> None:
    """Result table with a fixed column subset.

    wall_time_ms is carried on the rows for in-process use but excluded
    from files by default so that seeded reruns are byte-identical.
    """
    with _open_write(path) as fh:
        _write_metadata(fh, metadata)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                val = getattr(row, col)
                out.append(repr(float(val)) if isinstance(val, float) else val)
            writer.writerow(out)
