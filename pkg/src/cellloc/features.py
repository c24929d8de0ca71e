"""Per-node short-term moment features over a trailing window, plus channel timing helpers.

The feature vector at superframe t summarizes, for each node, the last L
samples (fewer near the start of a trace): the window mean and the unbiased
window variance. With L=1 the summary degenerates, so the pipeline falls back
to the raw RSSI vector instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import MeasurementSet

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class MomentConfig:
    """Trailing-window length L in superframes."""

    l: int = 2

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"window length must be >= 1, got {self.l}")


@dataclass(frozen=True)
class FeatureVector:
    """One feature row and the superframe it describes."""

    t: int
    values: tuple[float, ...]


def coherence_time(speed_mps: float, carrier_hz: float) -> float:
    """Time over which the fading channel decorrelates, for a given walking speed.

    Uses the 50%-autocorrelation rule of thumb against the maximum Doppler
    shift. Around 2.4 GHz and 1 m/s this is roughly half the 100 ms
    superframe, which motivates very short moment windows.
    """
    if speed_mps <= 0:
        raise ValueError(f"speed must be positive, got {speed_mps}")
    if carrier_hz <= 0:
        raise ValueError(f"carrier frequency must be positive, got {carrier_hz}")
    doppler_hz = speed_mps * carrier_hz / SPEED_OF_LIGHT
    return math.sqrt(9.0 / (16.0 * math.pi)) / doppler_hz


def moment_matrix(rssi: np.ndarray, l: int) -> np.ndarray:
    """(T, N) RSSI -> (T, 2N) trailing mean/variance pairs in node order.

    Row t uses samples max(0, t-l+1)..t. Variance is the unbiased estimate;
    a one-sample window reports 0. Column layout: mean_0, var_0, mean_1, ...
    """
    rssi = np.asarray(rssi, dtype=np.float64)
    if rssi.ndim != 2:
        raise ValueError(f"expected (frames, nodes) array, got shape {rssi.shape}")
    if l < 1:
        raise ValueError(f"window length must be >= 1, got {l}")
    return _kernels.moment_matrix(np.ascontiguousarray(rssi), int(l))


def raw_matrix(rssi: np.ndarray) -> np.ndarray:
    rssi = np.asarray(rssi, dtype=np.float64)
    if rssi.ndim != 2:
        raise ValueError(f"expected (frames, nodes) array, got shape {rssi.shape}")
    return rssi.copy()


def feature_matrix(ms: MeasurementSet, moment_l: int) -> np.ndarray:
    """Feature rows for a whole set: raw RSSI when L=1, moments when L>=2."""
    if moment_l < 1:
        raise ValueError(f"window length must be >= 1, got {moment_l}")
    if moment_l == 1:
        return raw_matrix(ms.rssi)
    return moment_matrix(ms.rssi, moment_l)


def _as_vectors(ms: MeasurementSet, mat: np.ndarray) -> list[FeatureVector]:
    return [
        FeatureVector(t=int(ms.t[i]), values=tuple(float(v) for v in mat[i]))
        for i in range(mat.shape[0])
    ]


def raw_features(ms: MeasurementSet) -> list[FeatureVector]:
    """Raw RSSI vectors wrapped as per-frame features (the L=1 pipeline)."""
    return _as_vectors(ms, raw_matrix(ms.rssi))


def moment_features(ms: MeasurementSet, config: MomentConfig = MomentConfig()) -> list[FeatureVector]:
    """Trailing mean/variance features for every frame of a set.

    L=1 is legal but degenerate (mean = the sample, variance = 0); the
    pipeline prefers raw_features there.
    """
    return _as_vectors(ms, moment_matrix(ms.rssi, config.l))
