"""Synthetic walk-through traces with a physically grounded radio model.

A transmitter carried at walking speed moves along a corridor-style x axis:
outside (cell 0) for x above the door line, inside (cell 1) below it, and the
designated test position (cell 2) at the far end. Sniffer nodes sit at fixed
coordinates on both sides of the door. Received power follows log-distance
path loss plus a wall penalty when the link crosses the door line, a slowly
decorrelating shadowing term, a fast per-frame fading term, and occasional
packet loss reported as -100 dBm. Values are quantized to whole dB like the
hardware reports.

Determinism contract: a (scenario, count, seed) triple always produces the
same bytes. Random draws happen in a fixed order regardless of parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import (
    MISSING_DBM,
    RSSI_MAX_DBM,
    RSSI_MIN_DBM,
    DataError,
    MeasurementSet,
)

STEP_S = 0.1  # superframe period, seconds

SCENARIO_FORMAT = "cellloc-scenario"
SCENARIO_VERSION = 1


@dataclass(frozen=True)
class Sniffer:
    name: str
    x: float
    y: float
    z: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Geometry:
    """Sniffer placement plus the two x-axis boundaries that define the cells."""

    sniffers: tuple[Sniffer, ...]
    x_door: float = 0.0
    x_test: float = -10.0

    def __post_init__(self):
        object.__setattr__(self, "sniffers", tuple(self.sniffers))
        if not self.sniffers:
            raise ValueError("need at least one sniffer")
        names = [s.name for s in self.sniffers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate sniffer names")
        if not self.x_test < self.x_door:
            raise ValueError("test-position boundary must lie below the door line")

    @property
    def node_labels(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.sniffers)

    def labels_for(self, x: np.ndarray) -> np.ndarray:
        """Cell label for each transmitter x position: 0 outside, 1 inside,
        2 at the test position."""
        x = np.asarray(x, dtype=np.float64)
        out = np.ones(x.shape, dtype=np.int64)
        out[x > self.x_door] = 0
        out[x <= self.x_test] = 2
        return out


def default_geometry() -> Geometry:
    """The measured deployment: six sniffers inside, four outside the door."""
    return Geometry(
        sniffers=(
            Sniffer("I-E", -13.30, 0.90, 0.64),
            Sniffer("I-T1", -9.88, -0.35, 3.92),
            Sniffer("I-T2", -6.58, -0.35, 3.92),
            Sniffer("I-T3", -1.60, -0.35, 3.92),
            Sniffer("I-DR", -1.55, 3.19, 1.00),
            Sniffer("I-DL", -1.55, -0.09, 1.00),
            Sniffer("O-E", 11.10, 2.02, 1.70),
            Sniffer("O-M", 6.80, 2.32, 1.84),
            Sniffer("O-DR", 2.21, 3.10, 0.99),
            Sniffer("O-DL", 2.21, 0.00, 1.00),
        )
    )


@dataclass(frozen=True)
class ChannelParams:
    """Radio model knobs; defaults produce realistic ~[-95, -40] dBm traces.

    shadow_rho is the one-superframe autocorrelation of the shadowing term;
    0.146 matches the decorrelation of a 2.44 GHz channel at walking speed
    (about half a superframe).
    """

    ref_loss_1m_db: float = 40.0
    exponent: float = 2.2
    wall_db: float = 20.0
    shadow_std_db: float = 4.0
    shadow_rho: float = 0.146
    fast_std_db: float = 3.0
    dropout_prob: float = 0.04
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError(f"path-loss exponent must be positive, got {self.exponent}")
        for name in ("shadow_std_db", "fast_std_db", "wall_db", "ref_loss_1m_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.shadow_rho < 1.0:
            raise ValueError(f"shadow_rho must be in [0, 1), got {self.shadow_rho}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")


@dataclass(frozen=True)
class Trajectory:
    """Transmitter x position per superframe, at fixed carry height."""

    x: np.ndarray
    speed: float = 1.0
    walk_y: float = 1.0
    walk_z: float = 1.2

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        if x.ndim != 1 or x.shape[0] == 0:
            raise ValueError("trajectory needs at least one frame")
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        step = self.speed * STEP_S
        if x.shape[0] > 1 and np.abs(np.diff(x)).max() > step * 1.001:
            raise ValueError(f"per-frame movement exceeds speed * {STEP_S}s")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @classmethod
    def in_out_pass(cls, x_start: float = 6.0, x_min: float = -11.5,
                    dwell_outside_s: float = 3.0, dwell_test_s: float = 5.0,
                    speed: float = 1.0, walk_y: float = 1.0, walk_z: float = 1.2) -> "Trajectory":
        """Dwell outside, walk in past the door to the test position, dwell,
        walk back out, dwell. The canonical labeled recording."""
        if x_min >= x_start:
            raise ValueError("walk must start above its turn-around point")
        step = speed * STEP_S
        n_dwell_out = max(1, round(dwell_outside_s / STEP_S))
        n_dwell_test = max(1, round(dwell_test_s / STEP_S))
        n_walk = math.ceil((x_start - x_min) / step)
        xs: list[float] = []
        xs.extend([x_start] * n_dwell_out)
        for i in range(1, n_walk + 1):
            xs.append(max(x_min, x_start - i * step))
        xs.extend([x_min] * n_dwell_test)
        for i in range(1, n_walk + 1):
            xs.append(min(x_start, x_min + i * step))
        xs.extend([x_start] * n_dwell_out)
        return cls(np.array(xs), speed=speed, walk_y=walk_y, walk_z=walk_z)


def generate(geometry: Geometry, channel: ChannelParams, trajectory: Trajectory,
             id: str = "synthetic") -> MeasurementSet:
    """Simulate one labeled recording of a trajectory through the deployment."""
    T = len(trajectory)
    n = len(geometry.sniffers)
    x = trajectory.x
    pos = np.stack([x, np.full(T, trajectory.walk_y), np.full(T, trajectory.walk_z)], axis=1)
    sn = np.stack([s.position for s in geometry.sniffers])  # (n, 3)

    d = np.linalg.norm(pos[:, None, :] - sn[None, :, :], axis=2)
    path_loss = channel.ref_loss_1m_db + 10.0 * channel.exponent * np.log10(np.maximum(d, 1.0))
    # Wall penalty whenever transmitter and sniffer sit on opposite sides of
    # the door line (the transmitter exactly on the line counts as inside).
    tx_out = x[:, None] > geometry.x_door
    sn_out = np.array([s.x > geometry.x_door for s in geometry.sniffers])[None, :]
    crosses = tx_out != sn_out

    rng = np.random.default_rng(channel.seed)
    # Fixed draw order, one block per effect, so toggling an effect off never
    # shifts the draws of the others.
    shadow_w = rng.standard_normal((T, n))
    fast_w = rng.standard_normal((T, n))
    drop_u = rng.random((T, n))

    shadow = np.empty((T, n))
    shadow[0] = channel.shadow_std_db * shadow_w[0]
    innov = channel.shadow_std_db * math.sqrt(1.0 - channel.shadow_rho**2)
    for t in range(1, T):
        shadow[t] = channel.shadow_rho * shadow[t - 1] + innov * shadow_w[t]

    rssi = -path_loss - channel.wall_db * crosses + shadow + channel.fast_std_db * fast_w
    if channel.quantize:
        rssi = np.round(rssi)
    rssi = np.clip(rssi, RSSI_MIN_DBM, RSSI_MAX_DBM)
    rssi[drop_u < channel.dropout_prob] = MISSING_DBM

    return MeasurementSet(
        id=id,
        node_labels=geometry.node_labels,
        t=np.arange(T, dtype=np.int64),
        rssi=rssi,
        labels=geometry.labels_for(x),
    )


@dataclass(frozen=True)
class TrajectoryParams:
    """Walk shape for generated recordings, before per-set jitter."""

    x_start: float = 6.0
    x_min: float = -11.5
    dwell_outside_s: float = 3.0
    dwell_test_s: float = 5.0
    speed: float = 1.0
    walk_y: float = 1.0
    walk_z: float = 1.2

    def __post_init__(self):
        if self.x_min >= self.x_start:
            raise ValueError("walk must start above its turn-around point")
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if self.dwell_outside_s < 0 or self.dwell_test_s < 0:
            raise ValueError("dwell times must be >= 0")


@dataclass(frozen=True)
class Scenario:
    """A full generation recipe: geometry, channel, walk, and per-set jitter.

    Jitter makes repeated recordings differ the way repeated human walks do:
    each set draws its own speed factor in [1-s, 1+s] and dwell factors in
    [1-d, 1+d].
    """

    geometry: Geometry = field(default_factory=default_geometry)
    channel: ChannelParams = ChannelParams()
    trajectory: TrajectoryParams = TrajectoryParams()
    speed_jitter: float = 0.15
    dwell_jitter: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.speed_jitter < 1.0:
            raise ValueError(f"speed_jitter must be in [0, 1), got {self.speed_jitter}")
        if not 0.0 <= self.dwell_jitter < 1.0:
            raise ValueError(f"dwell_jitter must be in [0, 1), got {self.dwell_jitter}")

    def to_json(self) -> str:
        geo = {
            "sniffers": [
                {"name": s.name, "x": s.x, "y": s.y, "z": s.z} for s in self.geometry.sniffers
            ],
            "x_door": self.geometry.x_door,
            "x_test": self.geometry.x_test,
        }
        if self.geometry == default_geometry():
            geo = "default"
        payload = {
            "format": SCENARIO_FORMAT,
            "version": SCENARIO_VERSION,
            "geometry": geo,
            "channel": {
                "ref_loss_1m_db": self.channel.ref_loss_1m_db,
                "exponent": self.channel.exponent,
                "wall_db": self.channel.wall_db,
                "shadow_std_db": self.channel.shadow_std_db,
                "shadow_rho": self.channel.shadow_rho,
                "fast_std_db": self.channel.fast_std_db,
                "dropout_prob": self.channel.dropout_prob,
                "quantize": self.channel.quantize,
            },
            "trajectory": {
                "x_start": self.trajectory.x_start,
                "x_min": self.trajectory.x_min,
                "dwell_outside_s": self.trajectory.dwell_outside_s,
                "dwell_test_s": self.trajectory.dwell_test_s,
                "speed": self.trajectory.speed,
                "walk_y": self.trajectory.walk_y,
                "walk_z": self.trajectory.walk_z,
            },
            "speed_jitter": self.speed_jitter,
            "dwell_jitter": self.dwell_jitter,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataError(f"scenario is not valid JSON: {e}") from None
        if not isinstance(payload, dict) or payload.get("format") != SCENARIO_FORMAT:
            raise DataError(f"not a {SCENARIO_FORMAT} document")
        if payload.get("version") != SCENARIO_VERSION:
            raise DataError(f"unsupported scenario version {payload.get('version')!r}")
        try:
            geo = payload["geometry"]
            if geo == "default":
                geometry = default_geometry()
            else:
                geometry = Geometry(
                    sniffers=tuple(
                        Sniffer(s["name"], float(s["x"]), float(s["y"]), float(s["z"]))
                        for s in geo["sniffers"]
                    ),
                    x_door=float(geo["x_door"]),
                    x_test=float(geo["x_test"]),
                )
            channel = ChannelParams(**{k: v for k, v in payload["channel"].items()})
            trajectory = TrajectoryParams(**{k: v for k, v in payload["trajectory"].items()})
            return cls(
                geometry=geometry,
                channel=channel,
                trajectory=trajectory,
                speed_jitter=float(payload["speed_jitter"]),
                dwell_jitter=float(payload["dwell_jitter"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"bad scenario: {e}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def generate_sets(scenario: Scenario, count: int, seed: int = 0,
                  id_prefix: str = "set") -> list[MeasurementSet]:
    """Generate ``count`` independent recordings of the scenario.

    Each set gets its own jittered walk and its own channel seed, both derived
    from (seed, set index), so any one set can be regenerated without the
    others.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = []
    for i in range(count):
        jitter_seed, chan_seed = (int(v) for v in np.random.SeedSequence([seed, i]).generate_state(2))
        jit = np.random.default_rng(jitter_seed)
        sj, dj = scenario.speed_jitter, scenario.dwell_jitter
        speed = scenario.trajectory.speed * (1.0 + sj * (2.0 * jit.random() - 1.0))
        dwell_out = scenario.trajectory.dwell_outside_s * (1.0 + dj * (2.0 * jit.random() - 1.0))
        dwell_test = scenario.trajectory.dwell_test_s * (1.0 + dj * (2.0 * jit.random() - 1.0))
        traj = Trajectory.in_out_pass(
            x_start=scenario.trajectory.x_start,
            x_min=scenario.trajectory.x_min,
            dwell_outside_s=dwell_out,
            dwell_test_s=dwell_test,
            speed=speed,
            walk_y=scenario.trajectory.walk_y,
            walk_z=scenario.trajectory.walk_z,
        )
        channel = replace(scenario.channel, seed=chan_seed)
        out.append(generate(scenario.geometry, channel, traj, id=f"{id_prefix}{i:02d}"))
    return out
