"""Time-aware smoothing of per-frame label sequences.

Two exchangeable second stages sit behind the point classifier: a trailing
median filter, and a discrete HMM whose hidden state is the true cell and
whose observations are the classifier's outputs. The HMM is estimated from
labeled training data by counting, then applied online with a forward
recursion (each step sees only past and present predictions), so both stages
are causal and usable in a live system. An offline most-likely-path decoder
is included as a non-causal reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import N_CELLS

ROW_SUM_TOL = 1e-12
DEFAULT_EPS = 1e-6

HMM_FORMAT = "cellloc-hmm"
HMM_VERSION = 1


def median_filter(y: np.ndarray, m: int) -> np.ndarray:
    """Trailing median over window y[max(0, t-m)..t]; m=0 is the identity.

    Even-sized warm-up windows take the lower of the two middle values,
    which keeps the output inside the observed label alphabet.
    """
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
    if y.ndim != 1:
        raise ValueError(f"expected a 1-d label sequence, got shape {y.shape}")
    if m < 0:
        raise ValueError(f"window extent must be >= 0, got {m}")
    if y.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return _kernels.median_filter(y, int(m))


def _check_stochastic_matrix(name: str, a: np.ndarray, n: int) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if a.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {a.shape}")
    if (a < 0).any():
        raise ValueError(f"{name} entries must be non-negative")
    bad = np.abs(a.sum(axis=1) - 1.0) > ROW_SUM_TOL
    if bad.any():
        raise ValueError(f"{name} row {int(np.argmax(bad))} does not sum to 1")
    return a


@dataclass(frozen=True)
class Hmm:
    """Cell-chain model: a[i, j] = p(next cell j | cell i), b[i, j] = p(classifier
    says j | cell i), pi0 = state distribution before any observation.

    ``forbidden`` (optional bool matrix) marks transitions that are
    physically impossible; such entries of ``a`` must be exactly 0.
    """

    a: np.ndarray
    b: np.ndarray
    pi0: np.ndarray
    eps: float = 0.0
    forbidden: np.ndarray | None = None

    def __post_init__(self):
        pi0 = np.ascontiguousarray(np.asarray(self.pi0, dtype=np.float64))
        if pi0.ndim != 1 or pi0.shape[0] < 1:
            raise ValueError(f"pi0 must be a non-empty vector, got shape {pi0.shape}")
        n = pi0.shape[0]
        if (pi0 < 0).any() or abs(pi0.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError("pi0 must be a probability vector")
        a = _check_stochastic_matrix("transition matrix", self.a, n)
        b = _check_stochastic_matrix("confusion matrix", self.b, n)
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        forbidden = self.forbidden
        if forbidden is not None:
            forbidden = np.ascontiguousarray(np.asarray(forbidden, dtype=bool))
            if forbidden.shape != (n, n):
                raise ValueError(f"forbidden mask must be {n}x{n}, got {forbidden.shape}")
            if (a[forbidden] != 0.0).any():
                raise ValueError("forbidden transitions must have probability exactly 0")
            forbidden.setflags(write=False)
        for arr in (a, b, pi0):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "forbidden", forbidden)

    @property
    def n(self) -> int:
        return int(self.pi0.shape[0])

    def to_json(self) -> str:
        payload = {
            "format": HMM_FORMAT,
            "version": HMM_VERSION,
            "n": self.n,
            "a": [[float(v) for v in row] for row in self.a],
            "b": [[float(v) for v in row] for row in self.b],
            "pi0": [float(v) for v in self.pi0],
            "eps": float(self.eps),
            "structural_zeros": (
                None if self.forbidden is None else [[bool(v) for v in row] for row in self.forbidden]
            ),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Hmm":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValueError(f"not valid JSON: {e}") from None
        if not isinstance(payload, dict) or payload.get("format") != HMM_FORMAT:
            raise ValueError(f"not a {HMM_FORMAT} document")
        if payload.get("version") != HMM_VERSION:
            raise ValueError(f"unsupported version {payload.get('version')!r}")
        n = int(payload["n"])
        a = np.array(payload["a"], dtype=np.float64)
        b = np.array(payload["b"], dtype=np.float64)
        pi0 = np.array(payload["pi0"], dtype=np.float64)
        if pi0.shape != (n,):
            raise ValueError("inconsistent stored shapes")
        sz = payload.get("structural_zeros")
        forbidden = None if sz is None else np.array(sz, dtype=bool)
        return cls(a, b, pi0, eps=float(payload.get("eps", 0.0)), forbidden=forbidden)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Hmm":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def chain_structural_zeros(n: int = N_CELLS) -> np.ndarray:
    """Forbid hops between non-adjacent cells of the 0-1-2 chain (|i - j| > 1)."""
    if n < 1:
        raise ValueError(f"need at least one state, got {n}")
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) > 1


def transition_counts(labels: np.ndarray, n: int = N_CELLS) -> np.ndarray:
    """Bigram tally: counts[i, j] = times label i is directly followed by j."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError(f"expected a 1-d label sequence, got shape {labels.shape}")
    if labels.size and ((labels < 0) | (labels >= n)).any():
        raise ValueError(f"labels must be in 0..{n - 1}")
    counts = np.zeros((n, n), dtype=np.int64)
    if labels.shape[0] >= 2:
        np.add.at(counts, (labels[:-1], labels[1:]), 1)
    return counts


def _normalize_counts(counts: np.ndarray, eps: float, allowed: np.ndarray) -> np.ndarray:
    """Counts -> row-stochastic matrix. eps is added to every allowed cell
    first; a row with no mass falls back to uniform over its allowed cells."""
    out = counts.astype(np.float64)
    out[~allowed] = 0.0
    out[allowed] += eps
    sums = out.sum(axis=1)
    for i in np.flatnonzero(sums == 0.0):
        row_allowed = allowed[i]
        if not row_allowed.any():
            raise ValueError(f"state {i} has no allowed successors")
        out[i, row_allowed] = 1.0 / np.count_nonzero(row_allowed)
        sums[i] = 1.0
    return out / sums[:, None]


def fit_hmm_segments(
    segments,
    n: int = N_CELLS,
    eps: float = DEFAULT_EPS,
    structural_zeros: np.ndarray | None = None,
) -> Hmm:
    """Estimate the model from (truth, predicted) sequence pairs by counting.

    Transitions are tallied within each segment only, so concatenating
    independent recordings never fabricates a cross-boundary transition.
    Emission rows come from the classifier's confusion on the same data.
    All counts share one smoothing pass: eps per allowed cell, renormalize.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    allowed_a = np.ones((n, n), dtype=bool)
    if structural_zeros is not None:
        structural_zeros = np.asarray(structural_zeros, dtype=bool)
        if structural_zeros.shape != (n, n):
            raise ValueError(f"structural-zero mask must be {n}x{n}")
        allowed_a = ~structural_zeros

    trans = np.zeros((n, n), dtype=np.int64)
    emit = np.zeros((n, n), dtype=np.int64)
    total = 0
    for truth, predicted in segments:
        truth = np.asarray(truth, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        if truth.shape != predicted.shape or truth.ndim != 1:
            raise ValueError(f"segment shape mismatch: {truth.shape} vs {predicted.shape}")
        for name, arr in (("truth", truth), ("predicted", predicted)):
            if arr.size and ((arr < 0) | (arr >= n)).any():
                raise ValueError(f"{name} labels must be in 0..{n - 1}")
        trans += transition_counts(truth, n)
        np.add.at(emit, (truth, predicted), 1)
        total += truth.shape[0]
    if total == 0:
        raise ValueError("no training frames")

    a = _normalize_counts(trans, eps, allowed_a)
    b = _normalize_counts(emit, eps, np.ones((n, n), dtype=bool))
    pi0 = np.full(n, 1.0 / n)
    return Hmm(a, b, pi0, eps=eps, forbidden=structural_zeros)


def fit_hmm(
    truth: np.ndarray,
    predicted: np.ndarray,
    n: int = N_CELLS,
    eps: float = DEFAULT_EPS,
    structural_zeros: np.ndarray | None = None,
) -> Hmm:
    """Single-segment convenience wrapper around fit_hmm_segments."""
    return fit_hmm_segments([(truth, predicted)], n=n, eps=eps, structural_zeros=structural_zeros)


@dataclass(frozen=True)
class ForwardState:
    """Carry-over of the online recursion: posterior after the last observation.

    ``t`` counts observations consumed so far minus one; -1 means none yet.
    """

    pi: np.ndarray
    t: int = -1

    def __post_init__(self):
        pi = np.ascontiguousarray(np.asarray(self.pi, dtype=np.float64))
        if pi.ndim != 1 or pi.shape[0] < 1:
            raise ValueError(f"pi must be a non-empty vector, got shape {pi.shape}")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def initial(cls, model: Hmm) -> "ForwardState":
        return cls(model.pi0, t=-1)


def forward_step(model: Hmm, state: ForwardState, y: int) -> tuple[int, ForwardState]:
    """Consume one classifier output; return (most probable cell, new state).

    The first observation reweights pi0 directly; later ones first propagate
    the previous posterior through the transition matrix. Ties in the argmax
    go to the smallest cell index.
    """
    if not 0 <= y < model.n:
        raise ValueError(f"observation {y} not in 0..{model.n - 1}")
    prior = state.pi if state.t < 0 else state.pi @ model.a
    p = prior * model.b[:, y]
    s = p.sum()
    if s <= 0.0:
        raise ValueError("observation impossible under model")
    pi = p / s
    return int(np.argmax(pi)), ForwardState(pi, t=state.t + 1)


def hmm_filter(model: Hmm, y: np.ndarray) -> np.ndarray:
    """Online smoothing of a whole prediction sequence (most probable cell
    after each observation)."""
    z, _ = hmm_filter_with_probabilities(model, y)
    return z


def hmm_filter_with_probabilities(model: Hmm, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """As hmm_filter, but also return the (T, n) per-step posteriors."""
    y = _check_observations(model, y)
    if y.shape[0] == 0:
        return np.empty(0, dtype=np.int64), np.empty((0, model.n))
    return _kernels.hmm_forward_filter(y, model.a, model.b, model.pi0)


def viterbi(model: Hmm, y: np.ndarray) -> np.ndarray:
    """Most likely whole-sequence cell path (offline reference; sees the
    entire sequence at once). Ties go to the smallest state index."""
    y = _check_observations(model, y)
    if y.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return _kernels.viterbi_path(y, model.a, model.b, model.pi0)


def _check_observations(model: Hmm, y: np.ndarray) -> np.ndarray:
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
    if y.ndim != 1:
        raise ValueError(f"expected a 1-d observation sequence, got shape {y.shape}")
    if y.size and ((y < 0) | (y >= model.n)).any():
        raise ValueError(f"observations must be in 0..{model.n - 1}")
    return y
