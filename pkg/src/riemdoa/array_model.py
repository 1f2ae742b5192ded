"""Microphone array geometry and far-field steering vectors.

Angles are azimuths in the horizontal plane measured from the ``+y`` axis
toward ``+x``: the arrival direction for angle ``theta`` is
``(sin theta, cos theta, 0)``. For a line array laid along ``x`` this makes
``theta = 0`` broadside and reproduces the textbook ULA phase
``2 pi (m - 1) (delta / lambda) sin theta``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidWavelength, ZeroReferenceEntry, ZeroVector

SPEED_OF_SOUND = 343.0

# experimental defaults: bin 250 of a 1024-point STFT at 16 kHz, 4.36 cm pitch
DEFAULT_FS = 16000
DEFAULT_NFFT = 1024
DEFAULT_BIN = 250
DEFAULT_SPACING = 0.0436


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters, shape ``(M, 3)``."""

    positions: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ConfigError(f"positions must have shape (M, 3), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ConfigError("an array needs at least two microphones")
        gaps = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        if np.any(gaps[np.triu_indices(pos.shape[0], 1)] == 0):
            raise ConfigError("microphone positions must be distinct")
        if not 0 <= self.reference_index < pos.shape[0]:
            raise ConfigError("reference_index out of range")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_mics(self):
        return self.positions.shape[0]

    @property
    def center(self):
        return self.positions.mean(axis=0)

    @classmethod
    def ula(cls, n_mics, spacing=DEFAULT_SPACING, origin=(0.0, 0.0, 0.0)):
        """Uniform linear array along ``+x`` starting at ``origin``."""
        origin = np.asarray(origin, dtype=float)
        offsets = np.zeros((n_mics, 3))
        offsets[:, 0] = spacing * np.arange(n_mics)
        return cls(origin + offsets)

    def direction_to(self, point):
        """Azimuth (radians) of ``point`` seen from the array center."""
        delta = np.asarray(point, dtype=float) - self.center
        return float(np.arctan2(delta[0], delta[1]))

    def to_dict(self):
        return {"positions": self.positions.tolist(), "reference_index": self.reference_index}

    @classmethod
    def from_dict(cls, d):
        if "positions" in d:
            return cls(np.asarray(d["positions"], dtype=float), d.get("reference_index", 0))
        if d.get("kind", "ula") == "ula":
            return cls.ula(int(d["n_mics"]), float(d.get("spacing", DEFAULT_SPACING)), d.get("origin", (0.0, 0.0, 0.0)))
        raise ConfigError(f"cannot build an array from {sorted(d)}")


def bin_frequency(bin_index=DEFAULT_BIN, fs=DEFAULT_FS, nfft=DEFAULT_NFFT):
    return bin_index * fs / nfft


def bin_wavelength(bin_index=DEFAULT_BIN, fs=DEFAULT_FS, nfft=DEFAULT_NFFT, c=SPEED_OF_SOUND):
    return c / bin_frequency(bin_index, fs, nfft)


def doa_grid(lo_deg=-70.0, hi_deg=70.0, step_deg=0.5):
    """Angle grid in radians, endpoints included."""
    n = int(round((hi_deg - lo_deg) / step_deg)) + 1
    return np.deg2rad(np.linspace(lo_deg, hi_deg, n))


def steering_matrix(geom, thetas, wavelength):
    """Steering vectors for every angle, shape ``(len(thetas), M)``.

    Entry ``m`` is ``exp(j 2 pi <p_m - p_ref, u(theta)> / lambda)``, so the
    reference entry is exactly 1.
    """
    if not wavelength > 0:
        raise InvalidWavelength(f"wavelength must be positive, got {wavelength}")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    u = np.stack([np.sin(thetas), np.cos(thetas), np.zeros_like(thetas)], axis=-1)
    rel = geom.positions - geom.positions[geom.reference_index]
    phase = 2 * np.pi * (u @ rel.T) / wavelength
    d = np.exp(1j * phase)
    d[:, geom.reference_index] = 1.0
    return d


def steering_vector(geom, theta, wavelength):
    return steering_matrix(geom, [theta], wavelength)[0]


def atf_to_rtf(h):
    """Relative transfer function: ``h / h[0]``."""
    h = np.asarray(h, dtype=complex)
    if h[0] == 0:
        raise ZeroReferenceEntry("reference entry of the ATF is zero")
    return h / h[0]


def correlation_coefficient(a, b):
    """Normalized squared inner product ``|<a, b>|^2 / (||a||^2 ||b||^2)``."""
    a, b = np.asarray(a), np.asarray(b)
    na, nb = np.vdot(a, a).real, np.vdot(b, b).real
    if na == 0 or nb == 0:
        raise ZeroVector("correlation of a zero vector is undefined")
    return float(min(abs(np.vdot(a, b)) ** 2 / (na * nb), 1.0))
