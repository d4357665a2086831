"""Sensor-log ingestion, interleaved data division, input scaling and ranking.

A dataset is a plain table: one named target column (raw engineering units,
e.g. kPa) and one or more named input columns. Inputs are scaled onto [-1, 1]
before training; targets stay in their physical units so error metrics keep
their meaning.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

MIN_SAMPLES = 5

TRAIN_RESIDUES = (0, 1, 2)
VAL_RESIDUE = 3
TEST_RESIDUE = 4


class DataError(ValueError):
    """Malformed input file or degenerate data (maps to CLI exit code 3)."""


@dataclass(frozen=True)
class Dataset:
    """Row-aligned samples: N x d inputs plus an N-vector of targets."""

    input_names: tuple[str, ...]
    inputs: np.ndarray
    target_name: str
    targets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "inputs", np.atleast_2d(np.asarray(self.inputs, dtype=float)))
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float).ravel())
        n, d = self.inputs.shape
        if d != len(self.input_names):
            raise DataError(f"{d} input columns but {len(self.input_names)} input names")
        if d < 1:
            raise DataError("dataset needs at least one input column")
        if n < MIN_SAMPLES:
            raise DataError(f"dataset has {n} rows; at least {MIN_SAMPLES} required")
        if self.targets.shape != (n,):
            raise DataError(f"targets length {self.targets.shape[0]} != {n} input rows")
        if not np.isfinite(self.inputs).all() or not np.isfinite(self.targets).all():
            raise DataError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/val/test index lists covering 0..n-1."""

    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)

    def to_json_dict(self) -> dict:
        return {"n": self.n, "train": list(self.train),
                "val": list(self.val), "test": list(self.test)}


def interleaved_split(n: int) -> SplitIndices:
    """Deterministic 60/20/20 division by index residue mod 5.

    Residues 0-2 train, 3 validation, 4 test, so every window of five
    consecutive samples contributes 3/1/1 and each subset spans the whole
    record.
    """
    if n < MIN_SAMPLES:
        raise DataError(f"cannot divide {n} samples at 60/20/20; need at least {MIN_SAMPLES}")
    residues = np.arange(n) % 5
    train = tuple(int(i) for i in np.nonzero(residues <= 2)[0])
    val = tuple(int(i) for i in np.nonzero(residues == VAL_RESIDUE)[0])
    test = tuple(int(i) for i in np.nonzero(residues == TEST_RESIDUE)[0])
    return SplitIndices(train=train, val=val, test=test)


def load_csv(path, target_column: str) -> Dataset:
    """Read a UTF-8 comma-separated sensor log with one header row.

    Every cell must be a plain decimal number (no thousands separators).
    Errors name the offending file line and column.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: file is empty, expected a header row") from None
            header = [h.strip() for h in header]
            if header.count(target_column) == 0:
                raise DataError(f"{path}: target column {target_column!r} not in header {header}")
            if header.count(target_column) > 1:
                raise DataError(f"{path}: target column {target_column!r} appears more than once")
            if len(set(header)) != len(header):
                dupes = sorted({h for h in header if header.count(h) > 1})
                raise DataError(f"{path}: duplicate column names {dupes}")
            target_idx = header.index(target_column)
            rows: list[list[float]] = []
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}")
                values = []
                for col, cell in zip(header, row):
                    text = cell.strip()
                    try:
                        value = float(text)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {line_no}, column {col!r}: "
                            f"non-numeric cell {cell!r}") from None
                    if not math.isfinite(value):
                        raise DataError(
                            f"{path}: row {line_no}, column {col!r}: non-finite value {cell!r}")
                    values.append(value)
                rows.append(values)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    input_idx = [i for i in range(len(header)) if i != target_idx]
    return Dataset(
        input_names=tuple(header[i] for i in input_idx),
        inputs=table[:, input_idx],
        target_name=target_column,
        targets=table[:, target_idx],
    )


def save_csv(data: Dataset, path) -> None:
    """Write a dataset in the load_csv format with round-trip float precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.input_names) + [data.target_name])
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.inputs[i]]
                            + [repr(float(data.targets[i]))])


@dataclass(frozen=True)
class Scaler:
    """Per-column affine map of inputs onto [-1, 1], invertible via stored min/max."""

    columns: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=float))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=float))
        if not (self.maxs > self.mins).all():
            raise DataError("scaler requires max > min for every column")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(values, dtype=float) - self.mins) / (self.maxs - self.mins) - 1.0

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return (np.asarray(scaled, dtype=float) + 1.0) / 2.0 * (self.maxs - self.mins) + self.mins

    def to_json_dict(self) -> dict:
        return {name: {"min": float(lo), "max": float(hi)}
                for name, lo, hi in zip(self.columns, self.mins, self.maxs)}

    @classmethod
    def from_json_dict(cls, payload: dict) -> "Scaler":
        names = tuple(payload.keys())
        return cls(columns=names,
                   mins=np.array([payload[c]["min"] for c in names]),
                   maxs=np.array([payload[c]["max"] for c in names]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Scaler":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def fit_scaler(data: Dataset) -> Scaler:
    mins = data.inputs.min(axis=0)
    maxs = data.inputs.max(axis=0)
    constant = np.nonzero(maxs <= mins)[0]
    if constant.size:
        names = [data.input_names[i] for i in constant]
        raise DataError(f"constant input column(s) cannot be scaled: {names}")
    return Scaler(columns=data.input_names, mins=mins, maxs=maxs)


def fit_apply_scaler(data: Dataset) -> tuple[Scaler, Dataset]:
    """Fit the [-1, 1] scaler on the inputs and return the scaled dataset.

    Targets are left in raw units so the error metrics keep physical meaning.
    """
    scaler = fit_scaler(data)
    scaled = Dataset(input_names=data.input_names,
                     inputs=scaler.apply(data.inputs),
                     target_name=data.target_name,
                     targets=data.targets.copy())
    return scaler, scaled


@dataclass(frozen=True)
class InputCorrelation:
    name: str
    r: float
    zero_variance: bool = False


def rank_inputs(data: Dataset) -> list[InputCorrelation]:
    """Pearson correlation of each input against the target, sorted by |r| descending.

    Advisory report only. Zero-variance columns (either side) get r = 0 and a flag.
    """
    if data.n < 3:
        raise DataError(f"need at least 3 samples to correlate, got {data.n}")
    t = data.targets
    t_dev = t - t.mean()
    t_ss = float(np.dot(t_dev, t_dev))
    results = []
    for j, name in enumerate(data.input_names):
        x = data.inputs[:, j]
        x_dev = x - x.mean()
        x_ss = float(np.dot(x_dev, x_dev))
        if x_ss == 0.0 or t_ss == 0.0:
            results.append(InputCorrelation(name=name, r=0.0, zero_variance=True))
            continue
        r = float(np.dot(x_dev, t_dev) / math.sqrt(x_ss * t_ss))
        results.append(InputCorrelation(name=name, r=r))
    results.sort(key=lambda item: -abs(item.r))
    return results
