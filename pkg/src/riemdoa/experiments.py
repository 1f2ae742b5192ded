"""Monte-Carlo protocol: random source placements on an arc around the array,
rendering, estimation with every (mean, beamformer) pair, and percentile
summaries."""

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import beamformers as bf
from .array_model import ArrayGeometry, bin_wavelength, doa_grid
from .errors import ConfigError
from .hpd import MeanConfig
from .metrics import directivity, output_sir, to_db
from .scenario import RoomSpec, Scenario, SourceSpec, render_signals
from .stft import StftConfig, segment_correlations, stft_bin

MEAN_KINDS = ("riemannian", "euclidean", "logeuclidean")
BEAMFORMERS = ("ds", "sbsp", "mvdr", "intersection")


@dataclass(frozen=True)
class Protocol:
    """One point of the experimental protocol.

    Sources sit on an arc of ``radius`` around the array center, on
    ``n_directions`` equally spaced azimuths spanning ``arc_deg``. Each trial
    draws distinct azimuths for the desired source and the interferences,
    and interference heights uniformly in ``interference_height``.
    ``activation`` is ``"alternating"`` (interference j active in segments
    with ``i % n_interferences == j``) or ``"bernoulli"`` (independent per
    segment with probability ``p_active``).
    """

    room_dimensions: tuple = (5.0, 4.0, 3.5)
    t60: float = 0.15
    air_length: int = 2048
    fs: int = 16000
    n_mics: int = 12
    spacing: float = 0.0436
    array_origin: tuple = (2.0436, 1.0, 2.0)
    snr_db: float = 50.0
    input_sir_db: float = -6.0
    n_interferences: int = 2
    n_segments: int = 2
    activation: str = "alternating"
    p_active: float = 0.3
    radius: float = 2.0
    arc_deg: float = 140.0
    n_directions: int = 20
    desired_height: float = 1.8
    interference_height: tuple = (0.5, 3.0)
    stft: StftConfig = field(default_factory=StftConfig)
    grid_step_deg: float = 0.5

    def __post_init__(self):
        if self.activation not in ("alternating", "bernoulli"):
            raise ConfigError(f"unknown activation scheme {self.activation!r}")
        if self.n_interferences + 1 > self.n_directions:
            raise ConfigError("not enough arc directions for all sources")

    @property
    def geometry(self):
        return ArrayGeometry.ula(self.n_mics, self.spacing, self.array_origin)

    @property
    def wavelength(self):
        return bin_wavelength(self.stft.bin_index, self.fs, self.stft.window_size)

    @property
    def directions_deg(self):
        half = self.arc_deg / 2
        return np.linspace(-half, half, self.n_directions)

    def estimator_config(self, thetas=None, subspace_dim="estimate"):
        half = self.arc_deg / 2
        if thetas is None:
            thetas = doa_grid(-half, half, self.grid_step_deg)
        return bf.EstimatorConfig(self.wavelength, thetas, self.stft, subspace_dim=subspace_dim,
                                  mean_config=MeanConfig())

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "stft" in d:
            d["stft"] = StftConfig.from_dict(d["stft"])
        for key in ("room_dimensions", "array_origin", "interference_height"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown protocol keys {sorted(unknown)}")
        return cls(**d)


def draw_scenario(proto, seed):
    """Random placement and activation for one trial."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    geom = proto.geometry
    c = geom.center
    az = np.deg2rad(rng.choice(proto.directions_deg, proto.n_interferences + 1, replace=False))
    heights = [proto.desired_height, *rng.uniform(*proto.interference_height, proto.n_interferences)]
    power_i = 10 ** (-proto.input_sir_db / 10)
    sources = []
    for j, (a, z) in enumerate(zip(az, heights)):
        pos = (c[0] + proto.radius * math.sin(a), c[1] + proto.radius * math.cos(a), z)
        if j == 0:
            sources.append(SourceSpec(pos, "desired", 1.0))
            continue
        if proto.activation == "alternating":
            act = np.arange(proto.n_segments) % proto.n_interferences == j - 1
        else:
            act = rng.random(proto.n_segments) < proto.p_active
        sources.append(SourceSpec(pos, "interference", power_i, activation=act))
    room = RoomSpec(proto.room_dimensions, proto.t60, proto.air_length, proto.fs)
    return Scenario(room, geom, sources, snr_db=proto.snr_db, seed=int(seed),
                    n_segments=proto.n_segments, stft=proto.stft)


@dataclass
class TrialRow:
    """Metrics of one (trial, mean kind, beamformer) combination."""

    scenario_id: int
    mean_kind: str
    beamformer: str
    input_sir_db: float
    output_sir_db: list
    mean_output_sir_db: float
    directivity: float
    doa_error_deg: float
    snr_db: float = float("nan")
    t60: float = float("nan")

    def to_dict(self):
        return asdict(self)


def evaluate_segments(segs, geom, proto, theta_d, theta_i, mean_kinds=MEAN_KINDS,
                      beamformers=BEAMFORMERS, oracle_dim=None, scenario_id=0):
    """Metric rows for every requested pair on precomputed segment matrices."""
    cfg = proto.estimator_config(subspace_dim="estimate" if oracle_dim is None else oracle_dim)
    cfg_full = replace(cfg, thetas=doa_grid(-90.0, 90.0, proto.grid_step_deg))
    rows = []
    means = {}
    for bfk in beamformers:
        kinds = ["segments"] if bfk == "intersection" else list(mean_kinds)
        for mk in kinds:
            if mk != "segments" and mk not in means:
                means[mk] = bf.compute_mean(segs, mk, cfg.mean_config)
            mean = means.get(mk)
            p = bf.beam_pattern(bfk, segs, mean, geom, cfg, mk)
            p_full = bf.beam_pattern(bfk, segs, mean, geom, cfg_full, mk)
            sir = output_sir(p, theta_d, theta_i)
            est = bf.pick_peaks(p, 1, cfg.min_separation)
            err = abs(np.rad2deg(est.directions[0] - theta_d)) if est.directions else np.nan
            rows.append(TrialRow(
                scenario_id=scenario_id, mean_kind=mk, beamformer=bfk,
                input_sir_db=proto.input_sir_db,
                output_sir_db=sir.per_interference_db,
                mean_output_sir_db=to_db(sir.mean),
                directivity=directivity(p_full, theta_d),
                doa_error_deg=float(err),
                snr_db=proto.snr_db, t60=proto.t60,
            ))
    return rows


def run_trial(proto, seed, mean_kinds=MEAN_KINDS, beamformers=BEAMFORMERS, oracle_dim=None, scenario_id=0):
    sc = draw_scenario(proto, seed)
    x = render_signals(sc)
    frames = stft_bin(x, proto.stft.window_size, proto.stft.hop, proto.stft.bin_index)
    segs = segment_correlations(frames, proto.stft.segment_frames, proto.stft.loading)
    (theta_d,), theta_i = sc.directions()
    return evaluate_segments(segs, sc.array, proto, theta_d, theta_i, mean_kinds, beamformers,
                             oracle_dim, scenario_id)


def trial_seeds(master_seed, n):
    """Per-trial seeds derived from the master seed, independent of scheduling."""
    children = np.random.SeedSequence(int(master_seed)).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def _trial_star(args):
    return run_trial(*args)


def run_monte_carlo(proto, n_trials, master_seed=0, mean_kinds=MEAN_KINDS, beamformers=BEAMFORMERS,
                    oracle_dim=None, workers=1):
    """All rows of ``n_trials`` trials. Results do not depend on ``workers``."""
    seeds = trial_seeds(master_seed, n_trials)
    jobs = [(proto, s, tuple(mean_kinds), tuple(beamformers), oracle_dim, i) for i, s in enumerate(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_trial_star, jobs))
    else:
        results = [_trial_star(j) for j in jobs]
    return [row for rows in results for row in rows]


PERCENTILES = (25, 50, 75)


def aggregate(rows, keys=("input_sir_db", "snr_db", "t60", "mean_kind", "beamformer")):
    """25th/50th/75th percentiles of output SIR, directivity and DoA error per group."""
    groups = {}
    for r in rows:
        d = r.to_dict() if isinstance(r, TrialRow) else r
        groups.setdefault(tuple(d[k] for k in keys), []).append(d)
    out = []
    for key, members in groups.items():
        agg = dict(zip(keys, key))
        agg["n"] = len(members)
        for metric in ("mean_output_sir_db", "directivity", "doa_error_deg"):
            vals = np.array([m[metric] for m in members], dtype=float)
            for q, v in zip(PERCENTILES, np.nanpercentile(vals, PERCENTILES)):
                agg[f"{metric}_p{q}"] = float(v)
        out.append(agg)
    return out


def sweep(base, axes, n_trials, master_seed=0, mean_kinds=MEAN_KINDS, beamformers=BEAMFORMERS,
          oracle_dim=None, workers=1):
    """Cartesian sweep over protocol fields.

    ``axes`` maps a :class:`Protocol` field name (``input_sir_db``,
    ``snr_db``, ``t60``, ...) to the list of values to visit. Every axis
    point reuses the same trial seeds, so placements are shared across the
    sweep. Returns ``(rows, aggregates)``.
    """
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise ConfigError("sweep axes must be nonempty")
    names = list(axes)
    all_rows = []
    for values in itertools.product(*(axes[n] for n in names)):
        proto = replace(base, **dict(zip(names, values)))
        all_rows.extend(run_monte_carlo(proto, n_trials, master_seed, mean_kinds, beamformers,
                                        oracle_dim, workers))
    return all_rows, aggregate(all_rows)
