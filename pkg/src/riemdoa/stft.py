"""Single-bin STFT analysis and per-segment sample correlation matrices."""

from dataclasses import dataclass, field

import numpy as np

from .errors import BinOutOfRange, ConfigError, SegmentTooShort
from .hpd import check_hpd, hermitian_part


@dataclass(frozen=True)
class StftConfig:
    """Frame and segment layout shared by the simulator and the estimators.

    ``loading`` is diagonal loading relative to the mean eigenvalue: each
    segment matrix gets ``loading * trace(G) / M * I`` added.
    """

    window_size: int = 1024
    hop: int = 512
    bin_index: int = 250
    segment_frames: int = 16
    loading: float = 1e-10

    def __post_init__(self):
        if self.window_size < 1 or self.hop < 1:
            raise ConfigError("window_size and hop must be positive")
        if not 0 <= self.bin_index <= self.window_size // 2:
            raise BinOutOfRange(f"bin {self.bin_index} outside [0, {self.window_size // 2}]")
        if self.segment_frames < 1:
            raise ConfigError("segment_frames must be positive")
        if self.loading < 0:
            raise ConfigError("loading must be nonnegative")

    @property
    def segment_samples(self):
        """Hop-aligned segment length in samples (used for activation gating)."""
        return self.segment_frames * self.hop

    def n_samples(self, n_segments):
        """Signal length whose STFT holds exactly ``n_segments`` full segments."""
        return (n_segments * self.segment_frames - 1) * self.hop + self.window_size

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in ("window_size", "hop", "bin_index", "segment_frames", "loading") if k in d}
        return cls(**known)


@dataclass
class StftFrames:
    """STFT coefficients of one frequency bin, shape ``(L_STFT, M)``."""

    frames: np.ndarray
    bin_index: int
    window_size: int
    hop: int

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_channels(self):
        return self.frames.shape[1]


@dataclass
class SegmentedCorrelations:
    """Ordered per-segment sample correlation matrices."""

    matrices: list
    segment_length: int
    frame_ranges: list = field(default_factory=list)

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]


def stft_bin(signals, window_size=1024, hop=512, bin_index=250):
    """Hann-windowed STFT of every channel, keeping one bin.

    Parameters
    ----------
    signals : ndarray, shape (M, N)
        Real time-domain signals.

    Returns
    -------
    StftFrames
        Frame ``l`` holds ``sum_n w(n) x(l*hop + n) exp(-2j pi k n / window_size)``
        for each channel.
    """
    x = np.atleast_2d(np.asarray(signals, dtype=float))
    if not 0 <= bin_index <= window_size // 2:
        raise BinOutOfRange(f"bin {bin_index} outside [0, {window_size // 2}]")
    n = x.shape[1]
    if n < window_size:
        raise ConfigError(f"signal of {n} samples is shorter than one window ({window_size})")
    n_frames = 1 + (n - window_size) // hop
    window = np.hanning(window_size + 1)[:-1]  # periodic Hann, COLA at 50% overlap
    kernel = window * np.exp(-2j * np.pi * bin_index * np.arange(window_size) / window_size)
    starts = hop * np.arange(n_frames)
    frames = np.lib.stride_tricks.sliding_window_view(x, window_size, axis=1)[:, starts, :]
    coeffs = frames @ kernel  # (M, L)
    return StftFrames(coeffs.T.copy(), bin_index, window_size, hop)


def full_stft_frame(signals, start, window_size=1024):
    """All bins of one Hann-windowed frame, shape ``(M, window_size)``."""
    x = np.atleast_2d(np.asarray(signals, dtype=float))
    window = np.hanning(window_size + 1)[:-1]
    return np.fft.fft(x[:, start:start + window_size] * window, axis=1)


def segment_correlations(f, l_w, loading=0.0, relative_loading=True):
    """Per-segment sample correlations ``(1/L_w) sum_l z(l) z(l)^H``.

    Trailing frames that do not fill a segment are dropped.

    Parameters
    ----------
    f : StftFrames or ndarray, shape (L_STFT, M)
    l_w : int
        Frames per segment; must be at least ``M``.
    loading : float
        Diagonal loading. With ``relative_loading`` the added term is
        ``loading * trace(G) / M * I``, otherwise ``loading * I``.
    """
    z = f.frames if isinstance(f, StftFrames) else np.asarray(f)
    n_frames, m = z.shape
    if l_w < m:
        raise SegmentTooShort(f"segment length {l_w} is smaller than the number of channels {m}")
    n_seg = n_frames // l_w
    if n_seg < 1:
        raise SegmentTooShort(f"{n_frames} frames do not fill one segment of {l_w}")
    mats, ranges = [], []
    for i in range(n_seg):
        block = z[i * l_w:(i + 1) * l_w]
        g = hermitian_part(block.T @ block.conj()) / l_w
        if loading:
            g = g + (loading * np.real(np.trace(g)) / m if relative_loading else loading) * np.eye(m)
        mats.append(check_hpd(g, name=f"segment {i} correlation"))
        ranges.append((i * l_w, (i + 1) * l_w))
    return SegmentedCorrelations(mats, l_w, ranges)


def whole_interval_correlation(f, n_frames=None):
    """Sample correlation over the first ``n_frames`` frames (all by default)."""
    z = f.frames if isinstance(f, StftFrames) else np.asarray(f)
    if n_frames is not None:
        z = z[:n_frames]
    return hermitian_part(z.T @ z.conj()) / z.shape[0]
