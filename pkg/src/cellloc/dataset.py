"""Labeled RSSI trace data model, canonical CSV I/O, node masking, and split enumeration.

Canonical file format: UTF-8 CSV, header ``t,label,rssi_<node0>,...,rssi_<nodeN-1>``,
one file per measurement set. The label column may be empty for unlabeled
(prediction-mode) traces. A link that delivered no packet is recorded as
exactly -100 dBm and is treated as a regular value everywhere downstream.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MISSING_DBM = -100.0
RSSI_MIN_DBM = -100.0
RSSI_MAX_DBM = 0.0
N_CELLS = 3
UNLABELED = -1  # internal stand-in for frames without ground truth

RSSI_COL_PREFIX = "rssi_"


class DataError(ValueError):
    """An input file or constructed set violates the data contract."""


def _format_dbm(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(float(v))


@dataclass(frozen=True)
class RssiFrame:
    """One superframe: the synchronized RSSI vector across all sniffer nodes."""

    t: int
    rssi: tuple[float, ...]
    label: int | None = None

    def __post_init__(self):
        if len(self.rssi) == 0:
            raise DataError("frame needs at least one rssi value")
        for v in self.rssi:
            if not RSSI_MIN_DBM <= v <= RSSI_MAX_DBM:
                raise DataError(f"rssi {v} out of range [{RSSI_MIN_DBM:.0f}, {RSSI_MAX_DBM:.0f}]")
        if self.label is not None and not 0 <= self.label < N_CELLS:
            raise DataError(f"label {self.label} not in 0..{N_CELLS - 1}")

    def missing_links(self) -> tuple[bool, ...]:
        return tuple(v == MISSING_DBM for v in self.rssi)


def _check_node_labels(node_labels) -> tuple[str, ...]:
    labels = tuple(node_labels)
    if not labels:
        raise DataError("need at least one node")
    if len(set(labels)) != len(labels):
        raise DataError("duplicate node names")
    for name in labels:
        if not name or any(c in name for c in ",\r\n"):
            raise DataError(f"invalid node name {name!r}")
    return labels


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Ordered, contiguous recording session; the atomic unit of train/val splitting.

    ``rssi`` is frames x nodes in dBm; ``labels`` uses -1 for unlabeled frames.
    Instances are immutable (arrays are read-only) and safe to share.
    """

    id: str
    node_labels: tuple[str, ...]
    t: np.ndarray
    rssi: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "node_labels", _check_node_labels(self.node_labels))
        t = np.ascontiguousarray(np.asarray(self.t, dtype=np.int64))
        rssi = np.ascontiguousarray(np.asarray(self.rssi, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if t.ndim != 1 or t.shape[0] == 0:
            raise DataError("set must contain at least one frame")
        if rssi.shape != (t.shape[0], len(self.node_labels)):
            raise DataError("rssi shape does not match frame count and node count")
        if labels.shape != t.shape:
            raise DataError("labels shape does not match frame count")
        if t.shape[0] > 1 and not (np.diff(t) == 1).all():
            raise DataError("superframe indices must be consecutive (gaps are an ingestion error)")
        if not ((rssi >= RSSI_MIN_DBM) & (rssi <= RSSI_MAX_DBM)).all():
            raise DataError(f"rssi out of range [{RSSI_MIN_DBM:.0f}, {RSSI_MAX_DBM:.0f}]")
        valid = (labels == UNLABELED) | ((labels >= 0) & (labels < N_CELLS))
        if not valid.all():
            raise DataError(f"labels must be 0..{N_CELLS - 1} or unlabeled")
        for a in (t, rssi, labels):
            a.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "rssi", rssi)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_frames(cls, id: str, node_labels, frames) -> "MeasurementSet":
        frames = list(frames)
        if not frames:
            raise DataError("set must contain at least one frame")
        t = np.array([f.t for f in frames], dtype=np.int64)
        rssi = np.array([f.rssi for f in frames], dtype=np.float64)
        labels = np.array(
            [UNLABELED if f.label is None else f.label for f in frames], dtype=np.int64
        )
        return cls(id, tuple(node_labels), t, rssi, labels)

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def frame(self, i: int) -> RssiFrame:
        lab = int(self.labels[i])
        return RssiFrame(
            t=int(self.t[i]),
            rssi=tuple(float(v) for v in self.rssi[i]),
            label=None if lab == UNLABELED else lab,
        )

    @property
    def frames(self) -> list[RssiFrame]:
        return [self.frame(i) for i in range(len(self))]

    def slice_frames(self, start: int, stop: int) -> "MeasurementSet":
        return MeasurementSet(
            self.id, self.node_labels, self.t[start:stop], self.rssi[start:stop], self.labels[start:stop]
        )

    def is_fully_labeled(self) -> bool:
        return bool((self.labels != UNLABELED).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return (
            self.id == other.id
            and self.node_labels == other.node_labels
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.rssi, other.rssi)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class NodeMask:
    """Bitmask over node columns; bit j selects node j in header order."""

    bits: int
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 1:
            raise DataError("mask needs at least one node position")
        if not 0 < self.bits < (1 << self.n_nodes):
            raise DataError(f"mask {self.bits:#b} must select at least one of {self.n_nodes} nodes")

    @classmethod
    def full(cls, n_nodes: int) -> "NodeMask":
        return cls((1 << n_nodes) - 1, n_nodes)

    @classmethod
    def from_names(cls, node_labels, names) -> "NodeMask":
        labels = list(node_labels)
        bits = 0
        for name in names:
            if name not in labels:
                raise DataError(f"unknown node name {name!r}; valid names: {', '.join(labels)}")
            bits |= 1 << labels.index(name)
        return cls(bits, len(labels))

    def indices(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.n_nodes) if self.bits >> j & 1)

    def names(self, node_labels) -> tuple[str, ...]:
        labels = tuple(node_labels)
        return tuple(labels[j] for j in self.indices())

    def popcount(self) -> int:
        return self.bits.bit_count()


@dataclass(frozen=True)
class SplitPlan:
    """One train/validation assignment: whole sets on either side, never both."""

    train_ids: tuple[str, ...]
    val_id: str

    def __post_init__(self):
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        if not self.train_ids:
            raise DataError("split needs at least one training set")
        if len(set(self.train_ids)) != len(self.train_ids):
            raise DataError("duplicate training set ids")
        if self.val_id in self.train_ids:
            raise DataError(f"set {self.val_id!r} cannot be both training and validation")


def load_set(path) -> MeasurementSet:
    """Read one canonical CSV file into a validated MeasurementSet.

    The set id is the file stem. Errors name the offending file line
    (header = line 1).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path.name}: empty file") from None
        if len(header) < 3 or header[0] != "t" or header[1] != "label":
            raise DataError(f"{path.name}: header must be t,label,{RSSI_COL_PREFIX}<node>,...")
        node_labels = []
        for col in header[2:]:
            if not col.startswith(RSSI_COL_PREFIX) or len(col) == len(RSSI_COL_PREFIX):
                raise DataError(f"{path.name}: bad rssi column {col!r}")
            node_labels.append(col[len(RSSI_COL_PREFIX):])
        node_labels = _check_node_labels(node_labels)

        ts, labels, rows = [], [], []
        prev_t = None
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path.name}: row {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                t = int(row[0])
            except ValueError:
                raise DataError(f"{path.name}: row {line_no}: bad superframe index {row[0]!r}") from None
            if prev_t is not None and t != prev_t + 1:
                raise DataError(f"{path.name}: row {line_no}: non-contiguous superframe index {t}")
            prev_t = t
            if row[1] == "":
                label = UNLABELED
            else:
                try:
                    label = int(row[1])
                except ValueError:
                    raise DataError(f"{path.name}: row {line_no}: unknown label value {row[1]!r}") from None
                if not 0 <= label < N_CELLS:
                    raise DataError(f"{path.name}: row {line_no}: unknown label value {label}")
            vals = []
            for col, cell in zip(header[2:], row[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path.name}: row {line_no}: bad rssi value {cell!r} in {col}") from None
                if not RSSI_MIN_DBM <= v <= RSSI_MAX_DBM:
                    raise DataError(f"{path.name}: row {line_no}: rssi {cell} out of range in {col}")
                vals.append(v)
            ts.append(t)
            labels.append(label)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path.name}: no frames")
    return MeasurementSet(
        path.stem,
        node_labels,
        np.array(ts, dtype=np.int64),
        np.array(rows, dtype=np.float64),
        np.array(labels, dtype=np.int64),
    )


def write_set(ms: MeasurementSet, path) -> None:
    """Write the canonical CSV; ``load_set(write_set(ms))`` is the identity."""
    path = Path(path)
    lines = ["t,label," + ",".join(RSSI_COL_PREFIX + name for name in ms.node_labels)]
    for i in range(len(ms)):
        lab = int(ms.labels[i])
        lab_str = "" if lab == UNLABELED else str(lab)
        vals = ",".join(_format_dbm(float(v)) for v in ms.rssi[i])
        lines.append(f"{int(ms.t[i])},{lab_str},{vals}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dir(path) -> list[MeasurementSet]:
    """Load every ``*.csv`` in a directory, sorted by file name."""
    path = Path(path)
    files = sorted(path.glob("*.csv"))
    if not files:
        raise DataError(f"no .csv files in {path}")
    return [load_set(f) for f in files]


def import_salrb(path, *, id: str | None = None, label_col: str = "label",
                 time_col: str | None = None, node_cols: list[str] | None = None) -> MeasurementSet:
    """Import one recording from the published measurement-campaign CSV layout.

    Assumptions, configurable where the published layout may differ:
    node columns are either passed explicitly via ``node_cols`` or taken as
    every column except the label and time columns, in file order; RSSI may be
    integer or sub-dB resolution; empty cells mean a missing link (-100 dBm);
    values are clipped into [-100, 0]. When ``time_col`` is absent the rows
    are assumed superframe-aligned and t becomes the row index.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path.name}: empty file")
        if label_col not in reader.fieldnames:
            raise DataError(f"{path.name}: no {label_col!r} column; columns: {', '.join(reader.fieldnames)}")
        if node_cols is None:
            skip = {label_col, time_col}
            node_cols = [c for c in reader.fieldnames if c not in skip]
        else:
            for c in node_cols:
                if c not in reader.fieldnames:
                    raise DataError(f"{path.name}: no {c!r} column")
        if not node_cols:
            raise DataError(f"{path.name}: no node columns")

        ts, labels, rows = [], [], []
        for line_no, row in enumerate(reader, start=2):
            raw = row[label_col]
            if raw is None or raw.strip() == "":
                label = UNLABELED
            else:
                try:
                    label = int(float(raw))
                except ValueError:
                    raise DataError(f"{path.name}: row {line_no}: unknown label value {raw!r}") from None
                if not 0 <= label < N_CELLS:
                    raise DataError(f"{path.name}: row {line_no}: unknown label value {label}")
            vals = []
            for c in node_cols:
                cell = row[c]
                if cell is None or cell.strip() == "":
                    vals.append(MISSING_DBM)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path.name}: row {line_no}: bad rssi value {cell!r} in {c}") from None
                vals.append(min(max(v, RSSI_MIN_DBM), RSSI_MAX_DBM))
            ts.append(len(ts))
            labels.append(label)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path.name}: no frames")
    # Rows are assumed superframe-aligned; t stays the row index even when a
    # time column exists, since wall-clock stamps need not be unit-stepped.
    return MeasurementSet(
        id or path.stem,
        tuple(node_cols),
        np.array(ts, dtype=np.int64),
        np.array(rows, dtype=np.float64),
        np.array(labels, dtype=np.int64),
    )


def select_nodes(ms: MeasurementSet, mask: NodeMask) -> MeasurementSet:
    """Project a set onto the masked node columns, preserving column order."""
    if mask.n_nodes != ms.n_nodes:
        raise DataError(f"mask covers {mask.n_nodes} nodes but set has {ms.n_nodes}")
    idx = list(mask.indices())
    return MeasurementSet(
        ms.id,
        tuple(ms.node_labels[j] for j in idx),
        ms.t,
        ms.rssi[:, idx],
        ms.labels,
    )


def enumerate_splits(set_ids, n_train: int) -> list[SplitPlan]:
    """All (train-combination, validation-set) plans, lexicographic over sorted ids."""
    ids = sorted(set_ids)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate set ids")
    if n_train < 1:
        raise DataError("need at least one training set")
    if n_train >= len(ids):
        raise DataError(f"n_train={n_train} leaves no validation set among {len(ids)} sets")
    plans = []
    for train in itertools.combinations(ids, n_train):
        chosen = set(train)
        for val in ids:
            if val not in chosen:
                plans.append(SplitPlan(train, val))
    return plans


def enumerate_node_masks(n_nodes: int) -> list[NodeMask]:
    """Every non-empty node subset as a mask, ascending by bit pattern."""
    if n_nodes < 1:
        raise DataError("need at least one node")
    return [NodeMask(bits, n_nodes) for bits in range(1, 1 << n_nodes)]
