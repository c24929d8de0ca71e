"""Pipeline assembly and the evaluation protocol: leave-sets-out splits,
window-length sweeps, and node-subset sweeps.

Ground rules enforced here: a measurement set is never split across train and
validation; features are computed per set so windows cannot leak across
recordings; the second stage sees only the validation prediction stream, in
order; the smoothing model is always estimated from training data only (the
classifier's own in-sample predictions on the training sets).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .classify import ConfusionMatrix, KnnClassifier, TrainingSet, accuracy, confusion
from .dataset import DataError, MeasurementSet, NodeMask, SplitPlan, enumerate_node_masks, enumerate_splits
from .features import feature_matrix
from .postprocess import (
    DEFAULT_EPS,
    chain_structural_zeros,
    fit_hmm_segments,
    hmm_filter,
    median_filter,
)

# Full enumeration above this many nodes would mean >65535 masks per split;
# callers must pass an explicit mask list instead.
MAX_ENUMERATED_NODES = 16

DEFAULT_N_TRAIN = 3


@dataclass(frozen=True)
class FilterSpec:
    """Second-stage choice: pass-through, trailing median, or online HMM."""

    kind: str = "none"
    median_m: int = 5
    hmm_eps: float = DEFAULT_EPS
    hmm_chain: bool = False  # forbid direct hops between non-adjacent cells

    def __post_init__(self):
        if self.kind not in ("none", "median", "hmm"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.median_m < 0:
            raise ValueError(f"median window extent must be >= 0, got {self.median_m}")
        if self.hmm_eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.hmm_eps}")

    @property
    def label(self) -> str:
        if self.kind == "median":
            return f"median({self.median_m})"
        return self.kind


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that defines one end-to-end run on one split."""

    moment_l: int = 2
    k: int = 5
    standardize: bool = True
    filter: FilterSpec = FilterSpec()
    node_mask: NodeMask | None = None

    def __post_init__(self):
        if self.moment_l < 1:
            raise ValueError(f"window length must be >= 1, got {self.moment_l}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class EvalReport:
    """One split's outcome: raw and smoothed predictions plus the score."""

    config: PipelineConfig
    split: SplitPlan
    t: np.ndarray
    truth: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    confusion: ConfusionMatrix

    def __post_init__(self):
        for name in ("t", "truth", "y_hat", "z_hat"):
            a = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.int64))
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (self.t.shape == self.truth.shape == self.y_hat.shape == self.z_hat.shape):
            raise ValueError("report sequences must share one length")

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy()

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "train_ids": list(self.split.train_ids),
            "val_id": self.split.val_id,
            "moment_l": cfg.moment_l,
            "k": cfg.k,
            "standardize": cfg.standardize,
            "filter": cfg.filter.label,
            "node_mask_bits": None if cfg.node_mask is None else cfg.node_mask.bits,
            "n_frames": int(self.t.shape[0]),
            "accuracy": self.accuracy,
            "confusion": [[int(v) for v in row] for row in self.confusion.counts],
        }


def _index_sets(sets: Iterable[MeasurementSet]) -> dict[str, MeasurementSet]:
    by_id: dict[str, MeasurementSet] = {}
    node_labels = None
    for ms in sets:
        if ms.id in by_id:
            raise DataError(f"duplicate set id {ms.id!r}")
        if node_labels is None:
            node_labels = ms.node_labels
        elif ms.node_labels != node_labels:
            raise DataError(
                f"set {ms.id!r} has node columns {ms.node_labels}, expected {node_labels}"
            )
        by_id[ms.id] = ms
    if not by_id:
        raise DataError("no measurement sets")
    return by_id


def _check_split(by_id: dict[str, MeasurementSet], split: SplitPlan) -> None:
    for sid in (*split.train_ids, split.val_id):
        if sid not in by_id:
            raise DataError(f"split names unknown set {sid!r}; have: {', '.join(sorted(by_id))}")


def _mask_columns(mask: NodeMask, l: int) -> list[int]:
    # Moments are per-node, so masking after feature extraction equals
    # extracting on the masked set; this is what makes the cache shareable.
    if l == 1:
        return list(mask.indices())
    return [c for j in mask.indices() for c in (2 * j, 2 * j + 1)]


def _features(by_id, sid: str, l: int, cache: dict) -> np.ndarray:
    key = (sid, l)
    if key not in cache:
        cache[key] = feature_matrix(by_id[sid], l)
    return cache[key]


def _stage1(by_id, split: SplitPlan, l: int, cols: list[int], k: int,
            standardize: bool, cache: dict, want_insample: bool):
    xs, ys = [], []
    for sid in split.train_ids:
        ms = by_id[sid]
        if not ms.is_fully_labeled():
            raise DataError(f"training set {sid!r} has unlabeled frames")
        xs.append(_features(by_id, sid, l, cache)[:, cols])
        ys.append(ms.labels)
    clf = KnnClassifier(k=k, standardize=standardize).fit(
        TrainingSet(np.vstack(xs), np.concatenate(ys))
    )
    val = by_id[split.val_id]
    if not val.is_fully_labeled():
        raise DataError(f"validation set {split.val_id!r} has unlabeled frames")
    y_hat = clf.predict_sequence(_features(by_id, split.val_id, l, cache)[:, cols])
    insample = None
    if want_insample:
        insample = [
            (by_id[sid].labels, clf.predict_sequence(x)) for sid, x in zip(split.train_ids, xs)
        ]
    return val.t, val.labels, y_hat, insample


def _apply_filter(spec: FilterSpec, y_hat: np.ndarray, insample) -> np.ndarray:
    if spec.kind == "none":
        return y_hat
    if spec.kind == "median":
        return median_filter(y_hat, spec.median_m)
    model = fit_hmm_segments(
        insample,
        eps=spec.hmm_eps,
        structural_zeros=chain_structural_zeros() if spec.hmm_chain else None,
    )
    return hmm_filter(model, y_hat)


def run_pipeline(sets: Iterable[MeasurementSet], split: SplitPlan,
                 config: PipelineConfig = PipelineConfig()) -> EvalReport:
    """Train on the split's training sets, evaluate causally on its validation set."""
    by_id = _index_sets(sets)
    _check_split(by_id, split)
    n = next(iter(by_id.values())).n_nodes
    mask = config.node_mask if config.node_mask is not None else NodeMask.full(n)
    if mask.n_nodes != n:
        raise DataError(f"mask covers {mask.n_nodes} nodes but sets have {n}")
    cache: dict = {}
    t, truth, y_hat, insample = _stage1(
        by_id, split, config.moment_l, _mask_columns(mask, config.moment_l),
        config.k, config.standardize, cache, config.filter.kind == "hmm",
    )
    z_hat = _apply_filter(config.filter, y_hat, insample)
    return EvalReport(
        config=config, split=split, t=t, truth=truth, y_hat=y_hat, z_hat=z_hat,
        confusion=confusion(truth, z_hat),
    )


def _eval_cell(by_id, split: SplitPlan, l: int, mask: NodeMask,
               filters: Sequence[FilterSpec], k: int, standardize: bool,
               cache: dict) -> list[float]:
    t, truth, y_hat, insample = _stage1(
        by_id, split, l, _mask_columns(mask, l), k, standardize, cache,
        any(f.kind == "hmm" for f in filters),
    )
    return [accuracy(truth, _apply_filter(f, y_hat, insample)) for f in filters]


# Worker-side state for the process pool; populated once per worker.
_POOL: dict = {}


def _pool_init(sets: list[MeasurementSet]) -> None:
    _POOL["by_id"] = _index_sets(sets)
    _POOL["cache"] = {}


def _pool_eval(task) -> list[float]:
    l, mask_bits, n_nodes, train_ids, val_id, filters, k, standardize = task
    return _eval_cell(
        _POOL["by_id"], SplitPlan(train_ids, val_id), l, NodeMask(mask_bits, n_nodes),
        filters, k, standardize, _POOL["cache"],
    )


@dataclass(frozen=True)
class SweepCell:
    """One (window length, node mask, split, filter) evaluation."""

    l: int
    filter_label: str
    mask_bits: int
    train_ids: tuple[str, ...]
    val_id: str
    accuracy: float


@dataclass(frozen=True)
class SweepLResult:
    cells: tuple[SweepCell, ...]
    n_nodes: int

    def mean(self, l: int, filter_label: str) -> float:
        vals = [c.accuracy for c in self.cells if c.l == l and c.filter_label == filter_label]
        if not vals:
            raise KeyError(f"no cells for l={l}, filter {filter_label!r}")
        return float(np.mean(vals))

    def means(self) -> dict[tuple[int, str], float]:
        keys: list[tuple[int, str]] = []
        for c in self.cells:
            if (c.l, c.filter_label) not in keys:
                keys.append((c.l, c.filter_label))
        return {key: self.mean(*key) for key in keys}


def sweep_l(sets: Iterable[MeasurementSet], l_values: Sequence[int],
            filters: Sequence[FilterSpec], masks: Sequence[NodeMask] | None = None,
            n_train: int = DEFAULT_N_TRAIN, k: int = 5, standardize: bool = True,
            jobs: int = 1) -> SweepLResult:
    """Evaluate every (L, mask, split, filter) combination.

    The expensive first stage runs once per (L, mask, split) and is shared by
    all filters. Results come back in deterministic enumeration order
    regardless of ``jobs``.
    """
    by_id = _index_sets(sets)
    n = next(iter(by_id.values())).n_nodes
    l_values = list(l_values)
    if not l_values:
        raise ValueError("need at least one window length")
    for l in l_values:
        if l < 1:
            raise ValueError(f"window length must be >= 1, got {l}")
    filters = list(filters)
    if not filters:
        raise ValueError("need at least one filter")
    labels = [f.label for f in filters]
    if len(set(labels)) != len(labels):
        raise ValueError(f"filter labels must be unique, got {labels}")
    if masks is None:
        masks = [NodeMask.full(n)]
    else:
        masks = list(masks)
        for m in masks:
            if m.n_nodes != n:
                raise DataError(f"mask covers {m.n_nodes} nodes but sets have {n}")
    if not masks:
        raise ValueError("need at least one mask")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")

    splits = enumerate_splits(sorted(by_id), n_train)
    tasks = [(l, m, s) for l in l_values for m in masks for s in splits]
    if jobs == 1:
        cache: dict = {}
        rows = [_eval_cell(by_id, s, l, m, filters, k, standardize, cache) for l, m, s in tasks]
    else:
        packed = [
            (l, m.bits, n, s.train_ids, s.val_id, tuple(filters), k, standardize)
            for l, m, s in tasks
        ]
        chunk = max(1, len(packed) // (jobs * 8))
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_pool_init, initargs=(list(by_id.values()),)
        ) as pool:
            rows = list(pool.map(_pool_eval, packed, chunksize=chunk))

    cells = tuple(
        SweepCell(l=l, filter_label=f.label, mask_bits=m.bits, train_ids=s.train_ids,
                  val_id=s.val_id, accuracy=acc)
        for (l, m, s), accs in zip(tasks, rows)
        for f, acc in zip(filters, accs)
    )
    return SweepLResult(cells=cells, n_nodes=n)


@dataclass(frozen=True)
class MaskAccuracy:
    mask: NodeMask
    mean_accuracy: float


@dataclass(frozen=True)
class MaskSweepResult:
    per_mask: tuple[MaskAccuracy, ...]

    def histogram(self, bins: int = 20):
        """(counts, edges) over [0, 1] of the per-mask mean accuracies."""
        return np.histogram([m.mean_accuracy for m in self.per_mask], bins=bins, range=(0.0, 1.0))


def sweep_node_masks(sets: Iterable[MeasurementSet], l: int = 2,
                     filter_spec: FilterSpec = FilterSpec(),
                     masks: Sequence[NodeMask] | None = None,
                     n_train: int = DEFAULT_N_TRAIN, k: int = 5,
                     standardize: bool = True, jobs: int = 1) -> MaskSweepResult:
    """Mean accuracy over all splits for every node subset.

    With no explicit mask list this enumerates all 2^N - 1 subsets, which is
    refused above MAX_ENUMERATED_NODES nodes.
    """
    by_id = _index_sets(sets)
    n = next(iter(by_id.values())).n_nodes
    if masks is None:
        if n > MAX_ENUMERATED_NODES:
            raise DataError(
                f"{n} nodes means {2 ** n - 1} subsets; pass an explicit mask list instead"
            )
        masks = enumerate_node_masks(n)
    result = sweep_l(
        sets, [l], [filter_spec], masks=masks, n_train=n_train, k=k,
        standardize=standardize, jobs=jobs,
    )
    by_bits: dict[int, list[float]] = {m.bits: [] for m in masks}
    for c in result.cells:
        by_bits[c.mask_bits].append(c.accuracy)
    per_mask = tuple(
        MaskAccuracy(mask=m, mean_accuracy=float(np.mean(by_bits[m.bits]))) for m in masks
    )
    return MaskSweepResult(per_mask=per_mask)
