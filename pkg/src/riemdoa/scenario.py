"""Synthetic multichannel recordings in a shoebox room.

Sources emit white Gaussian noise gated per segment, propagate through
image-source room impulse responses, and spatially white sensor noise is
added at a level fixed by the source-referenced SNR ``sigma_0^2 / sigma_v^2``.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import oaconvolve

from .array_model import SPEED_OF_SOUND, ArrayGeometry
from .errors import ConfigError, PositionOutsideRoom
from .stft import StftConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SINC_TAPS = 8


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple = (5.0, 4.0, 3.5)
    t60: float = 0.15
    air_length: int = 2048
    fs: int = 16000
    c: float = SPEED_OF_SOUND

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dimensions)
        if len(dims) != 3 or min(dims) <= 0:
            raise ConfigError(f"room dimensions must be three positive lengths, got {self.dimensions}")
        if self.t60 < 0:
            raise ConfigError("t60 must be nonnegative")
        if self.air_length < 1 or self.fs <= 0:
            raise ConfigError("air_length and fs must be positive")
        object.__setattr__(self, "dimensions", dims)

    @property
    def reflection_coefficient(self):
        """Uniform wall pressure reflection coefficient from Sabine's formula."""
        if self.t60 == 0:
            return 0.0
        lx, ly, lz = self.dimensions
        volume = lx * ly * lz
        surface = 2 * (lx * ly + lx * lz + ly * lz)
        alpha = min(0.161 * volume / (surface * self.t60), 1.0)
        return math.sqrt(1.0 - alpha)

    @property
    def max_order(self):
        if self.t60 == 0:
            return 0
        return math.ceil(self.t60 * self.c / min(self.dimensions)) + 3

    def contains(self, point):
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))


@dataclass
class SourceSpec:
    """One emitter.

    ``activation`` holds one boolean per segment (``None`` means always on).
    ``activation_offset`` shifts the gating by that fraction of a segment,
    so that activity need not align with segment boundaries.
    ``stream`` keys the random generator of this source's signal; by default
    the source's index in the scenario is used.
    """

    position: tuple
    kind: str = "desired"
    power: float = 1.0
    activation: object = None
    activation_offset: float = 0.0
    stream: object = None

    def __post_init__(self):
        if self.kind not in ("desired", "interference"):
            raise ConfigError(f"source kind must be 'desired' or 'interference', got {self.kind!r}")
        if not self.power > 0:
            raise ConfigError("source power must be positive")
        self.position = tuple(float(v) for v in self.position)
        if self.activation is not None:
            self.activation = np.asarray(self.activation, dtype=bool)
            if self.kind == "desired" and not self.activation.all():
                raise ConfigError("desired sources are active in every segment")

    def activation_map(self, n_segments):
        if self.activation is None:
            return np.ones(n_segments, dtype=bool)
        if len(self.activation) != n_segments:
            raise ConfigError(f"activation has {len(self.activation)} entries, expected {n_segments}")
        return self.activation

    def activity_fraction(self, n_segments):
        return float(np.mean(self.activation_map(n_segments)))


@dataclass
class Scenario:
    room: RoomSpec
    array: ArrayGeometry
    sources: list
    snr_db: float = 50.0
    seed: int = 0
    n_segments: int = 2
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if not any(s.kind == "desired" for s in self.sources):
            raise ConfigError("a scenario needs at least one desired source")
        if self.n_segments < 1:
            raise ConfigError("n_segments must be >= 1")
        for s in self.sources:
            s.activation_map(self.n_segments)

    @property
    def desired(self):
        return [s for s in self.sources if s.kind == "desired"]

    @property
    def interferences(self):
        return [s for s in self.sources if s.kind == "interference"]

    @property
    def noise_variance(self):
        """``sigma_v^2 = sigma_0^2 / 10^(SNR/10)``, referenced to the first desired source."""
        return self.desired[0].power / 10 ** (self.snr_db / 10)

    @property
    def n_samples(self):
        return self.stft.n_samples(self.n_segments)

    def directions(self):
        """Azimuths (radians) of the desired and interference sources."""
        return ([self.array.direction_to(s.position) for s in self.desired],
                [self.array.direction_to(s.position) for s in self.interferences])

    def with_sources(self, sources):
        return replace(self, sources=list(sources))


###############################################################################
# Image-source room impulse responses


def _fractional_delay_taps(delay):
    """Hann-windowed sinc taps for (possibly fractional) sample delays.

    Returns integer tap positions and weights, both shaped ``delay.shape + (8,)``.
    """
    base = np.floor(delay).astype(int)
    idx = base[..., None] + np.arange(-SINC_TAPS // 2 + 1, SINC_TAPS // 2 + 1)
    x = idx - delay[..., None]
    weights = np.sinc(x) * 0.5 * (1 + np.cos(2 * np.pi * x / SINC_TAPS))
    return idx, weights


def _image_sources(room, src):
    """Image positions and reflection counts up to the room's maximum order."""
    dims = np.asarray(room.dimensions)
    order = room.max_order
    d_max = room.c * room.air_length / room.fs
    axes_pos, axes_refl = [], []
    for a in range(3):
        n_lim = min(order, math.ceil(d_max / (2 * dims[a])) + 1)
        n = np.arange(-n_lim, n_lim + 1)
        pos = np.concatenate([2 * n * dims[a] + src[a], 2 * n * dims[a] - src[a]])
        refl = np.concatenate([np.abs(2 * n), np.abs(2 * n - 1)])
        keep = refl <= order
        axes_pos.append(pos[keep])
        axes_refl.append(refl[keep])
    gx, gy, gz = np.meshgrid(*axes_pos, indexing="ij")
    rx, ry, rz = np.meshgrid(*axes_refl, indexing="ij")
    positions = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    reflections = (rx + ry + rz).ravel()
    keep = reflections <= order
    return positions[keep], reflections[keep]


def room_airs(room, src, mics):
    """AIRs from one source to several microphones, shape ``(M, air_length)``."""
    src = np.asarray(src, dtype=float)
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    if not room.contains(src):
        raise PositionOutsideRoom(f"source {src.tolist()} is not strictly inside the room")
    for m in mics:
        if not room.contains(m):
            raise PositionOutsideRoom(f"microphone {m.tolist()} is not strictly inside the room")
    images, reflections = _image_sources(room, src)
    beta = room.reflection_coefficient
    amp_refl = np.where(reflections == 0, 1.0, beta ** reflections.astype(float))
    dist = np.linalg.norm(images[None, :, :] - mics[:, None, :], axis=-1)  # (M, I)
    delay = dist * room.fs / room.c
    gain = amp_refl[None, :] / (4 * np.pi * dist)
    idx, w = _fractional_delay_taps(delay)
    vals = gain[..., None] * w
    ok = (idx >= 0) & (idx < room.air_length)
    n_mics = mics.shape[0]
    flat = (np.arange(n_mics)[:, None, None] * room.air_length + idx)[ok]
    out = np.bincount(flat, weights=vals[ok], minlength=n_mics * room.air_length)
    return out.reshape(n_mics, room.air_length)


def image_source_air(room, src, mic):
    """AIR between one source and one microphone (length ``room.air_length``).

    Direct path delay is ``distance / c`` with gain ``1 / (4 pi distance)``;
    each wall bounce multiplies by the uniform reflection coefficient.
    Fractional delays use an 8-tap Hann-windowed sinc.
    """
    return room_airs(room, src, [mic])[0]


###############################################################################
# Rendering


def _gate(source, n_segments, n_samples, segment_samples):
    act = source.activation_map(n_segments)
    if act.all():
        return None
    t = np.arange(n_samples) - source.activation_offset * segment_samples
    seg = np.clip(np.floor(t / segment_samples).astype(int), 0, n_segments - 1)
    return act[seg].astype(float)


def source_signal(sc, index, n_samples=None):
    """Gated white Gaussian emission of source ``index``."""
    n_samples = sc.n_samples if n_samples is None else n_samples
    src = sc.sources[index]
    key = index if src.stream is None else src.stream
    rng = np.random.default_rng(np.random.SeedSequence([int(sc.seed), 0, *np.atleast_1d(key).tolist()]))
    s = rng.standard_normal(n_samples) * math.sqrt(src.power)
    gate = _gate(src, sc.n_segments, n_samples, sc.stft.segment_samples)
    return s if gate is None else s * gate


def sensor_noise(sc, n_samples=None):
    n_samples = sc.n_samples if n_samples is None else n_samples
    rng = np.random.default_rng(np.random.SeedSequence([int(sc.seed), 1]))
    return rng.standard_normal((sc.array.n_mics, n_samples)) * math.sqrt(sc.noise_variance)


def render_signals(sc, duration=None, include_noise=True):
    """Microphone signals for a scenario, shape ``(M, N)``.

    ``duration`` in seconds defaults to exactly ``n_segments`` full segments.
    Deterministic given ``sc.seed``: every source and the noise draw from
    their own seeded stream, so adding a source does not perturb the others.
    """
    needed = sc.n_samples
    if duration is None:
        n_samples = needed
    else:
        n_samples = int(round(duration * sc.room.fs))
        if n_samples < needed:
            raise ConfigError(
                f"duration {duration}s holds {n_samples} samples; {sc.n_segments} segments need {needed}"
            )
    out = np.zeros((sc.array.n_mics, n_samples))
    for j, src in enumerate(sc.sources):
        s = source_signal(sc, j, n_samples)
        if not s.any():
            continue
        airs = room_airs(sc.room, src.position, sc.array.positions)
        out += oaconvolve(s[None, :], airs, axes=1)[:, :n_samples]
    if include_noise:
        out += sensor_noise(sc, n_samples)
    return out


def write_wav(path, signals, fs):
    """Write ``(M, N)`` signals as 32-bit float multichannel WAV."""
    from scipy.io import wavfile

    wavfile.write(str(path), int(fs), np.asarray(signals, dtype=np.float32).T)


def read_wav(path):
    from scipy.io import wavfile

    fs, data = wavfile.read(str(path))
    return np.atleast_2d(np.asarray(data, dtype=float).T), fs


###############################################################################
# Config files


def _source_from_dict(d, array):
    if "position" in d:
        pos = d["position"]
    elif "azimuth_deg" in d:
        c = array.center
        theta = math.radians(d["azimuth_deg"])
        r = float(d.get("radius", 2.0))
        pos = (c[0] + r * math.sin(theta), c[1] + r * math.cos(theta), float(d.get("height", c[2])))
    else:
        raise ConfigError("a source needs 'position' or 'azimuth_deg'")
    return SourceSpec(
        position=pos,
        kind=d.get("kind", "desired"),
        power=float(d.get("power", 1.0)),
        activation=d.get("activation"),
        activation_offset=float(d.get("activation_offset", 0.0)),
        stream=d.get("stream"),
    )


def scenario_from_dict(d):
    """Build a :class:`Scenario` from a parsed TOML/JSON mapping."""
    try:
        room = RoomSpec(**d.get("room", {}))
        array = ArrayGeometry.from_dict(d["array"])
        sources = [_source_from_dict(s, array) for s in d["sources"]]
        stft_cfg = StftConfig.from_dict(d.get("stft", {}))
        n_segments = int(d.get("n_segments", d.get("stft", {}).get("n_segments", 2)))
        return Scenario(room, array, sources, snr_db=float(d.get("snr_db", 50.0)),
                        seed=int(d.get("seed", 0)), n_segments=n_segments, stft=stft_cfg)
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def scenario_to_dict(sc):
    return {
        "seed": sc.seed,
        "snr_db": sc.snr_db,
        "n_segments": sc.n_segments,
        "room": {"dimensions": list(sc.room.dimensions), "t60": sc.room.t60,
                 "air_length": sc.room.air_length, "fs": sc.room.fs, "c": sc.room.c},
        "array": sc.array.to_dict(),
        "stft": {"window_size": sc.stft.window_size, "hop": sc.stft.hop, "bin_index": sc.stft.bin_index,
                 "segment_frames": sc.stft.segment_frames, "loading": sc.stft.loading},
        "sources": [
            {"position": list(s.position), "kind": s.kind, "power": s.power,
             **({} if s.activation is None else {"activation": s.activation.tolist()}),
             "activation_offset": s.activation_offset,
             **({} if s.stream is None else {"stream": s.stream})}
            for s in sc.sources
        ],
    }


def load_config(path):
    """Parse a TOML or JSON file into a dict."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".json":
            return json.loads(path.read_text())
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_scenario(path):
    d = load_config(path)
    return scenario_from_dict(d.get("scenario", d))
