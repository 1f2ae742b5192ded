"""Beam patterns, subspace-dimension rules, peak picking and DoA pipelines."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from . import hpd
from .array_model import steering_matrix
from .errors import ConfigError, DimensionMismatch, EmptyGrid, InvalidSubspaceDim
from .stft import SegmentedCorrelations, StftConfig, StftFrames, segment_correlations, stft_bin

BEAMFORMERS = ("ds", "sbsp", "mvdr", "intersection")
MEAN_KINDS = ("riemannian", "euclidean", "logeuclidean")
DEFAULT_MIN_SEPARATION = np.deg2rad(5.0)


@dataclass
class BeamPattern:
    """Power per look direction. ``mean_kind`` may be ``"segment:<i>"``."""

    thetas: np.ndarray
    power: np.ndarray
    kind: str = "ds"
    mean_kind: str = "riemannian"

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.thetas.shape != self.power.shape or self.thetas.ndim != 1:
            raise DimensionMismatch("thetas and power must be 1-D arrays of equal length")
        if self.thetas.size and np.any(np.diff(self.thetas) <= 0):
            raise ConfigError("pattern grid must be strictly increasing")
        if np.any(self.power < 0):
            raise ValueError("beam pattern power must be nonnegative")

    def value_at(self, theta):
        """Pattern value at the grid point nearest to ``theta``."""
        return float(self.power[np.argmin(np.abs(self.thetas - theta))])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["theta_deg", "power", "power_db"])
        for t, p in zip(np.rad2deg(self.thetas), self.power):
            w.writerow([f"{t:.6f}", repr(float(p)), f"{10 * np.log10(max(p, 1e-300)):.6f}"])
        return buf.getvalue()

    def to_dict(self):
        return {"kind": self.kind, "mean_kind": self.mean_kind,
                "theta_deg": np.rad2deg(self.thetas).tolist(), "power": self.power.tolist()}


@dataclass
class DoaEstimate:
    """Directions sorted by descending peak power; ``complete`` is False when
    fewer than the requested number of lobes were found."""

    directions: list
    peak_powers: list
    complete: bool = True

    def to_dict(self):
        return {"directions_deg": np.rad2deg(self.directions).tolist(),
                "peak_powers": [float(p) for p in self.peak_powers], "complete": self.complete}


###############################################################################
# Beam patterns


def _check_dims(g, geom):
    g = hpd.check_hpd(g)
    if g.shape[0] != geom.n_mics:
        raise DimensionMismatch(f"matrix is {g.shape[0]}x{g.shape[0]} but the array has {geom.n_mics} microphones")
    return g


def _quad_forms(d, g):
    # d^H(theta) G d(theta) for every row of d
    return np.real(np.einsum("tm,mn,tn->t", d.conj(), g, d))


def ds_beam_pattern(g, thetas, geom, wavelength, mean_kind="riemannian"):
    """Delay-and-sum pattern ``d^H G d``."""
    g = _check_dims(g, geom)
    d = steering_matrix(geom, thetas, wavelength)
    return BeamPattern(thetas, np.maximum(_quad_forms(d, g), 0.0), "ds", mean_kind)


def leading_eigenvectors(g, n):
    w, u = np.linalg.eigh(g)
    return u[:, np.argsort(w)[::-1][:n]]


def sbsp_beam_pattern(g, n_d, thetas, geom, wavelength, mean_kind="riemannian"):
    """Signal-subspace projection pattern ``||U^H d||^2`` over the leading ``n_d``
    eigenvectors of ``g``."""
    g = _check_dims(g, geom)
    if not 1 <= n_d < geom.n_mics:
        raise InvalidSubspaceDim(f"subspace dimension must be in [1, {geom.n_mics - 1}], got {n_d}")
    u = leading_eigenvectors(g, n_d)
    d = steering_matrix(geom, thetas, wavelength)
    power = np.sum(np.abs(d.conj() @ u) ** 2, axis=1)
    return BeamPattern(thetas, power, "sbsp", mean_kind)


def mvdr_beam_pattern(g, thetas, geom, wavelength, mean_kind="riemannian"):
    """Minimum-variance distortionless pattern ``1 / (d^H G^{-1} d)``.

    ``d^H G^{-1} d = ||L^{-1} d||^2`` with the Cholesky factor ``G = L L^H``.
    """
    g = _check_dims(g, geom)
    c, lower = cho_factor(g, lower=True)
    d = steering_matrix(geom, thetas, wavelength)
    y = solve_triangular(c, d.T, lower=True)
    return BeamPattern(thetas, 1.0 / np.sum(np.abs(y) ** 2, axis=0), "mvdr", mean_kind)


def intersection_projector(segs, per_segment_dims, symmetric=False):
    """Product of per-segment signal-subspace projectors in segment order.

    With ``symmetric`` the forward and backward products are averaged, which
    for orthogonal projectors is the Hermitian part of the forward product.
    """
    mats = list(segs)
    if len(per_segment_dims) != len(mats):
        raise InvalidSubspaceDim("need one subspace dimension per segment")
    m = mats[0].shape[0]
    prod = np.eye(m, dtype=complex)
    for g, k in zip(mats, per_segment_dims):
        if not 1 <= k <= m:
            raise InvalidSubspaceDim(f"per-segment dimension {k} outside [1, {m}]")
        v = leading_eigenvectors(hpd.hermitian_part(g), k)
        prod = prod @ (v @ v.conj().T)
    return hpd.hermitian_part(prod) if symmetric else prod


def intersection_beam_pattern(segs, n_d, per_segment_dims, thetas, geom, wavelength, symmetric=False):
    """Pattern ``||V^H d||^2`` over the leading ``n_d`` eigenvectors of the
    projector product. Eigenvectors of a non-Hermitian product are ranked by
    eigenvalue magnitude and normalized to unit length."""
    if not 1 <= n_d < geom.n_mics:
        raise InvalidSubspaceDim(f"subspace dimension must be in [1, {geom.n_mics - 1}], got {n_d}")
    p = intersection_projector(segs, per_segment_dims, symmetric)
    if p.shape[0] != geom.n_mics:
        raise DimensionMismatch("segment matrices do not match the array size")
    if symmetric or len(segs) == 1:
        w, v = np.linalg.eigh(hpd.hermitian_part(p))
    else:
        w, v = np.linalg.eig(p)
    order = np.argsort(np.abs(w))[::-1][:n_d]
    v = v[:, order] / np.linalg.norm(v[:, order], axis=0)
    # an eigenvector with eigenvalue ~0 carries no subspace information
    v = v * (np.abs(w[order]) > 1e-12)
    d = steering_matrix(geom, thetas, wavelength)
    power = np.sum(np.abs(d.conj() @ v) ** 2, axis=1)
    return BeamPattern(thetas, power, "intersection", "segments")


###############################################################################
# Subspace dimension and peaks


def estimate_subspace_dim(g, mode="mean_matrix"):
    """Signal-subspace dimension by eigenvalue thresholding.

    ``"mean_matrix"``: eigenvalues normalized to unit sum above their mean
    plus standard deviation. ``"per_segment"``: eigenvalues above 1.5 times
    their mean. An integer (or ``("oracle", n)``) is returned as is. The
    count is floored at 1.
    """
    if isinstance(mode, tuple) and mode[0] == "oracle":
        return int(mode[1])
    if isinstance(mode, (int, np.integer)) and not isinstance(mode, bool):
        return int(mode)
    w = np.linalg.eigvalsh(hpd.check_hpd(g))
    if mode == "mean_matrix":
        w = w / w.sum()
        threshold = w.mean() + w.std()
    elif mode == "per_segment":
        threshold = 1.5 * w.mean()
    else:
        raise ValueError(f"unknown subspace-dimension mode {mode!r}")
    return max(int(np.sum(w > threshold)), 1)


def pick_peaks(p, n_d=1, min_separation=DEFAULT_MIN_SEPARATION):
    """The ``n_d`` strongest local maxima at least ``min_separation`` apart.

    Grid endpoints count as local maxima when not below their neighbor.
    Equal peaks are taken in order of increasing angle.
    """
    if n_d < 1:
        raise ValueError("n_d must be >= 1")
    power = p.power
    if power.size == 0:
        raise EmptyGrid("beam pattern has no grid points")
    padded = np.concatenate([[-np.inf], power, [-np.inf]])
    is_max = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:])
    cand = np.flatnonzero(is_max)
    cand = cand[np.lexsort((p.thetas[cand], -power[cand]))]
    chosen = []
    for i in cand:
        if all(abs(p.thetas[i] - p.thetas[j]) >= min_separation for j in chosen):
            chosen.append(i)
            if len(chosen) == n_d:
                break
    return DoaEstimate([float(p.thetas[i]) for i in chosen], [float(power[i]) for i in chosen],
                       complete=len(chosen) == n_d)


###############################################################################
# Pipelines


@dataclass
class EstimatorConfig:
    """Everything the DoA pipelines need besides the signals and the array.

    ``subspace_dim`` is ``"estimate"`` (mean+std rule on the mean matrix) or
    an integer oracle dimension.
    """

    wavelength: float
    thetas: np.ndarray
    stft: StftConfig = field(default_factory=StftConfig)
    n_sources: int = 1
    subspace_dim: object = "estimate"
    min_separation: float = DEFAULT_MIN_SEPARATION
    mean_config: hpd.MeanConfig = field(default_factory=hpd.MeanConfig)
    symmetric_intersection: bool = False


@dataclass
class BatchResult:
    estimate: DoaEstimate
    pattern: BeamPattern
    mean: object
    segments: SegmentedCorrelations


def compute_mean(segs, mean_kind, cfg=None):
    mats = list(segs)
    if mean_kind == "riemannian":
        return hpd.karcher_mean(mats, cfg)
    if mean_kind == "euclidean":
        return hpd.euclidean_mean(mats)
    if mean_kind == "logeuclidean":
        return hpd.log_euclidean_mean(mats)
    if isinstance(mean_kind, str) and mean_kind.startswith("segment:"):
        return mats[int(mean_kind.split(":", 1)[1])]
    raise ValueError(f"unknown mean kind {mean_kind!r}")


def beam_pattern(beamformer, segs, mean, geom, cfg, mean_kind):
    """Dispatch to one of the four beamformers."""
    if beamformer == "ds":
        return ds_beam_pattern(mean, cfg.thetas, geom, cfg.wavelength, mean_kind)
    if beamformer == "mvdr":
        return mvdr_beam_pattern(mean, cfg.thetas, geom, cfg.wavelength, mean_kind)
    if beamformer == "sbsp":
        n = min(estimate_subspace_dim(mean, _dim_mode(cfg)), geom.n_mics - 1)
        return sbsp_beam_pattern(mean, n, cfg.thetas, geom, cfg.wavelength, mean_kind)
    if beamformer == "intersection":
        dims = [estimate_subspace_dim(g, "per_segment") for g in segs]
        ref = hpd.euclidean_mean(list(segs))
        n = min(estimate_subspace_dim(ref, _dim_mode(cfg)), geom.n_mics - 1)
        return intersection_beam_pattern(segs, n, dims, cfg.thetas, geom, cfg.wavelength,
                                         cfg.symmetric_intersection)
    raise ValueError(f"unknown beamformer {beamformer!r}")


def _dim_mode(cfg):
    return "mean_matrix" if cfg.subspace_dim == "estimate" else int(cfg.subspace_dim)


def frames_of(signals, stft_cfg):
    if isinstance(signals, StftFrames):
        return signals
    return stft_bin(signals, stft_cfg.window_size, stft_cfg.hop, stft_cfg.bin_index)


def doa_batch(signals, geom, cfg, mean_kind="riemannian", beamformer="ds"):
    """Batch DoA: STFT bin -> segment correlations -> mean -> pattern -> peaks.

    ``signals`` is an ``(M, N)`` time-domain array or precomputed
    :class:`StftFrames`.
    """
    frames = frames_of(signals, cfg.stft)
    if frames.n_channels != geom.n_mics:
        raise DimensionMismatch(f"{frames.n_channels} channels but {geom.n_mics} microphones")
    segs = segment_correlations(frames, cfg.stft.segment_frames, cfg.stft.loading)
    mean = None if beamformer == "intersection" else compute_mean(segs, mean_kind, cfg.mean_config)
    pattern = beam_pattern(beamformer, segs, mean, geom, cfg, mean_kind)
    est = pick_peaks(pattern, cfg.n_sources, cfg.min_separation)
    return BatchResult(est, pattern, mean, segs)


@dataclass
class StreamingStep:
    index: int
    estimate: DoaEstimate
    mean: np.ndarray


def doa_streaming(frames, geom, cfg, mean_kind="riemannian"):
    """Streaming DoA, yielding one :class:`StreamingStep` per update.

    Riemannian: accumulate ``segment_frames`` frames, form the segment
    correlation, update the recursive mean (started at the identity) and
    emit the DS estimate. Euclidean: update the running mean every frame.

    ``frames`` is an iterable of length-M STFT vectors, or
    :class:`StftFrames`.
    """
    if isinstance(frames, StftFrames):
        frames = frames.frames
    l_w = cfg.stft.segment_frames
    if mean_kind == "riemannian":
        est = hpd.RecursiveRiemannianMean(geom.n_mics)
        buf = []
        for z in frames:
            buf.append(np.asarray(z))
            if len(buf) < l_w:
                continue
            g = segment_correlations(np.array(buf), l_w, cfg.stft.loading)[0]
            buf = []
            r = est.update(g)
            pattern = ds_beam_pattern(r, cfg.thetas, geom, cfg.wavelength, "riemannian")
            yield StreamingStep(est.count, pick_peaks(pattern, cfg.n_sources, cfg.min_separation), r)
    elif mean_kind == "euclidean":
        est = hpd.RunningEuclideanMean()
        for z in frames:
            e = est.update_frame(z)
            if est.count < geom.n_mics:
                continue  # rank-deficient until M frames are in
            pattern = ds_beam_pattern(hpd.check_hpd(e, loading=cfg.stft.loading * np.real(np.trace(e)) / geom.n_mics),
                                      cfg.thetas, geom, cfg.wavelength, "euclidean")
            yield StreamingStep(est.count, pick_peaks(pattern, cfg.n_sources, cfg.min_separation), e)
    else:
        raise ValueError(f"streaming supports 'riemannian' or 'euclidean', got {mean_kind!r}")
