"""Output SIR, directivity and the closed-form model of the segment means.

The closed forms describe the population setting: one desired source with
ATF ``h0`` that is always on, interferences with mutually orthogonal ATFs
``h_j`` active in a fraction ``tau_j`` of the segments, and white noise of
power ``sigma_v^2``. Every segment matrix is then diagonal in the same
basis, both means keep the form

    G = sigma_0^2 h0 h0^H + sum_j mu_j^2 h_j h_j^H + sigma_v^2 I,

and only the interference coefficients ``mu_j^2`` depend on the geometry.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import AtfsNotOrthogonal, DimensionMismatch, GridTooCoarse, WrongInterferenceCount
from .hpd import hermitian_part

ORTHOGONALITY_TOL = 1e-10
DIRECTIVITY_MIN_POINTS = 90


###############################################################################
# Pattern metrics


@dataclass
class SirResult:
    per_interference: list
    mean: float
    flagged: bool = False

    @property
    def mean_db(self):
        return to_db(self.mean)

    @property
    def per_interference_db(self):
        return [to_db(v) for v in self.per_interference]


def to_db(x):
    x = float(x)
    if x == np.inf:
        return np.inf
    return 10 * np.log10(x) if x > 0 else -np.inf


def output_sir(p, theta_d, theta_i_list):
    """Pattern ratio ``P(theta_d) / P(theta_j)`` per interference and their mean.

    Directions are looked up on the nearest grid point. A denominator below
    1e-300 gives ``inf`` and sets ``flagged``.
    """
    num = p.value_at(theta_d)
    vals, flagged = [], False
    for th in theta_i_list:
        den = p.value_at(th)
        if den < 1e-300:
            vals.append(np.inf)
            flagged = True
        else:
            vals.append(num / den)
    mean = float(np.mean(vals)) if vals else np.nan
    return SirResult(vals, mean, flagged)


def directivity(p, theta_d, convention="broadside"):
    """``P(theta_d) / (1/2 int_0^pi P(psi) sin(psi) dpsi)`` by trapezoid rule.

    ``psi`` is the angle from the array axis. With the default
    ``"broadside"`` convention the pattern grid holds azimuths measured from
    broadside, ``psi = theta + pi/2``, and must cover ``[-pi/2, pi/2]``;
    with ``"axis"`` the grid already holds ``psi`` on ``[0, pi]``.
    """
    th = p.thetas
    if th.size < DIRECTIVITY_MIN_POINTS:
        raise GridTooCoarse(f"directivity needs >= {DIRECTIVITY_MIN_POINTS} grid points, got {th.size}")
    psi = th + np.pi / 2 if convention == "broadside" else th
    step = np.max(np.diff(psi))
    if psi[0] > step * 1e-6 + 1e-12 or psi[-1] < np.pi - step * 1e-6 - 1e-12:
        raise GridTooCoarse("pattern grid does not cover the full half-plane")
    inside = (psi >= -1e-12) & (psi <= np.pi + 1e-12)
    denom = 0.5 * trapezoid(p.power[inside] * np.sin(psi[inside]), psi[inside])
    return float(p.value_at(theta_d) / denom)


###############################################################################
# Interference coefficients


def mu_riemannian(sigma_j_sq, h_norm_sq, sigma_v_sq, tau_j):
    """Interference coefficient of the Riemannian mean.

    ``((sigma_j^2 ||h_j||^2 + sigma_v^2)^tau (sigma_v^2)^(1-tau) - sigma_v^2) / ||h_j||^2``,
    evaluated as ``sigma_v^2 expm1(tau log1p(x)) / ||h_j||^2`` with
    ``x = sigma_j^2 ||h_j||^2 / sigma_v^2``.
    """
    sigma_j_sq, h_norm_sq, sigma_v_sq, tau_j = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (sigma_j_sq, h_norm_sq, sigma_v_sq, tau_j)))
    x = sigma_j_sq * h_norm_sq / sigma_v_sq
    out = sigma_v_sq * np.expm1(tau_j * np.log1p(x)) / h_norm_sq
    return out.item() if out.ndim == 0 else out


def mu_euclidean(sigma_j_sq, tau_j):
    """Interference coefficient of the Euclidean mean, ``sigma_j^2 tau_j``."""
    out = np.asarray(sigma_j_sq, dtype=float) * np.asarray(tau_j, dtype=float)
    return out.item() if out.ndim == 0 else out


###############################################################################
# Closed-form model


@dataclass
class AnalyticModel:
    """Scalar description of the population setting.

    ``kappa`` is the correlation of a source's steering vector with its own
    ATF, ``rho`` with another source's ATF.
    """

    sigma0_sq: float
    sigma_v_sq: float
    sigma_sq: np.ndarray
    tau: np.ndarray
    h_norm_sq: np.ndarray
    h0_norm_sq: float
    kappa: float = 1.0
    rho: float = 0.0
    n_mics: int = 12
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sigma_sq = np.atleast_1d(np.asarray(self.sigma_sq, dtype=float))
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.h_norm_sq = np.atleast_1d(np.asarray(self.h_norm_sq, dtype=float))
        if not (self.sigma_sq.shape == self.tau.shape == self.h_norm_sq.shape):
            raise DimensionMismatch("per-interference arrays must have equal length")
        if not (self.sigma0_sq > 0 and self.sigma_v_sq > 0 and self.h0_norm_sq > 0):
            raise ValueError("powers and norms must be positive")
        if np.any(self.sigma_sq <= 0) or np.any(self.h_norm_sq <= 0):
            raise ValueError("interference powers and ATF norms must be positive")
        if np.any((self.tau < 0) | (self.tau > 1)):
            raise ValueError("activity fractions must lie in [0, 1]")
        if not 0 <= self.rho < self.kappa <= 1:
            raise ValueError("need 0 <= rho < kappa <= 1")

    @property
    def n_interferences(self):
        return self.sigma_sq.size

    def with_noise(self, sigma_v_sq):
        return AnalyticModel(self.sigma0_sq, sigma_v_sq, self.sigma_sq, self.tau, self.h_norm_sq,
                             self.h0_norm_sq, self.kappa, self.rho, self.n_mics)

    def mu_sq(self, rule):
        """Interference coefficients for ``"riemannian"``, ``"euclidean"`` or
        ``"optimal"`` (all zero); an explicit array passes through."""
        if isinstance(rule, str):
            if rule == "riemannian":
                return np.atleast_1d(mu_riemannian(self.sigma_sq, self.h_norm_sq, self.sigma_v_sq, self.tau))
            if rule == "euclidean":
                return np.atleast_1d(mu_euclidean(self.sigma_sq, self.tau))
            if rule == "optimal":
                return np.zeros(self.n_interferences)
            raise ValueError(f"unknown mu rule {rule!r}")
        mu = np.atleast_1d(np.asarray(rule, dtype=float))
        if mu.shape != self.sigma_sq.shape:
            raise DimensionMismatch("need one coefficient per interference")
        return mu

    def desired_weight(self, rule):
        # the SIR-optimal member of the family has unit desired coefficient
        return 1.0 if isinstance(rule, str) and rule == "optimal" else self.sigma0_sq


def analytic_sir(model, mu_rule="riemannian", total=False):
    """Closed-form DS output SIR per interference (or the total SIR).

    ``SIR_j = 1 + ((a - b_j) kappa + (b_j - a) rho)
                  / (a rho + sum_{l != j} b_l rho + b_j kappa + sigma_v^2)``
    with ``a = sigma_0^2 ||h0||^2`` and ``b_l = mu_l^2 ||h_l||^2``.

    With ``total`` the interference powers are averaged first, giving the
    ratio of the desired-direction power to the mean interference-direction
    power; returns a scalar.
    """
    a = model.desired_weight(mu_rule) * model.h0_norm_sq
    b = model.mu_sq(mu_rule) * model.h_norm_sq
    k, r, sv = model.kappa, model.rho, model.sigma_v_sq
    if total:
        n = b.size
        bbar = b.mean()
        den = a * r + (n - 1) / n * b.sum() * r + bbar * k + sv
        return float(1 + ((a - bbar) * k + (bbar - a) * r) / den)
    others = b.sum() - b
    den = a * r + others * r + b * k + sv
    return 1 + ((a - b) * k + (b - a) * r) / den


def _check_orthogonal(vectors):
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            a, b = vectors[i], vectors[j]
            if abs(np.vdot(a, b)) > ORTHOGONALITY_TOL * np.linalg.norm(a) * np.linalg.norm(b):
                raise AtfsNotOrthogonal(f"ATFs {i} and {j} are not orthogonal")


def analytic_mean_matrix(model, h0, hs, geometry_kind="riemannian", check=True):
    """Assemble ``sigma_0^2 h0 h0^H + sum_j mu_j^2 h_j h_j^H + sigma_v^2 I``.

    ``geometry_kind`` selects the coefficient rule; ``"optimal"`` gives
    ``h0 h0^H + sigma_v^2 I``. Coefficients use the norms of the vectors
    passed in, not the ones stored on the model.
    """
    h0 = np.asarray(h0, dtype=complex)
    hs = [np.asarray(h, dtype=complex) for h in hs]
    if len(hs) != model.n_interferences:
        raise DimensionMismatch(f"model has {model.n_interferences} interferences, got {len(hs)} ATFs")
    if check:
        _check_orthogonal([h0, *hs])
    norms = np.array([np.vdot(h, h).real for h in hs])
    if geometry_kind == "riemannian":
        mu = np.atleast_1d(mu_riemannian(model.sigma_sq, norms, model.sigma_v_sq, model.tau))
    else:
        mu = model.mu_sq(geometry_kind)
    g = model.desired_weight(geometry_kind) * np.outer(h0, h0.conj())
    for m, h in zip(mu, hs):
        g = g + m * np.outer(h, h.conj())
    return hermitian_part(g + model.sigma_v_sq * np.eye(h0.size))


def population_segment_matrices(model, h0, hs, activation):
    """Per-segment population correlations for an activation map.

    ``activation`` has shape ``(n_interferences, n_segments)``.
    """
    activation = np.asarray(activation, dtype=bool)
    h0 = np.asarray(h0, dtype=complex)
    base = model.sigma0_sq * np.outer(h0, h0.conj()) + model.sigma_v_sq * np.eye(h0.size)
    mats = []
    for i in range(activation.shape[1]):
        g = base.copy()
        for j, h in enumerate(hs):
            if activation[j, i]:
                h = np.asarray(h, dtype=complex)
                g = g + model.sigma_sq[j] * np.outer(h, h.conj())
        mats.append(hermitian_part(g))
    return mats


def misalignment_matrices(model, alpha, h0, hs):
    """Two segment correlations when two alternating interferences are offset
    by ``alpha`` from the segment boundaries.

    Interference 1 has weight ``alpha^2`` in segment 1 and ``(1 - alpha)^2``
    in segment 2; interference 2 the reverse.
    """
    if model.n_interferences != 2 or len(hs) != 2:
        raise WrongInterferenceCount("misalignment model needs exactly two interferences")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    h0 = np.asarray(h0, dtype=complex)
    h1, h2 = (np.asarray(h, dtype=complex) for h in hs)
    s1, s2 = model.sigma_sq
    base = model.sigma0_sq * np.outer(h0, h0.conj()) + model.sigma_v_sq * np.eye(h0.size)
    p1, p2 = np.outer(h1, h1.conj()), np.outer(h2, h2.conj())
    g1 = base + alpha ** 2 * s1 * p1 + (1 - alpha) ** 2 * s2 * p2
    g2 = base + (1 - alpha) ** 2 * s1 * p1 + alpha ** 2 * s2 * p2
    return hermitian_part(g1), hermitian_part(g2)


def sir_bar(g, h0, hj):
    """ATF-based SIR, ``h0^H G h0 / hj^H G hj``."""
    g = np.asarray(g)
    h0, hj = np.asarray(h0), np.asarray(hj)
    if g.shape != (h0.size, h0.size) or hj.size != h0.size:
        raise DimensionMismatch("matrix and ATFs have inconsistent sizes")
    return float(np.real(np.vdot(h0, g @ h0)) / np.real(np.vdot(hj, g @ hj)))


def quadratic_sir(g, d0, dj):
    """DS output SIR straight from the matrix, ``d0^H G d0 / dj^H G dj``."""
    return sir_bar(g, d0, dj)


###############################################################################
# Synthetic ATF constructions


def orthogonal_ula_directions(n_mics, n, spacing_over_wavelength=0.5, start=0):
    """Angles whose ULA steering vectors are mutually orthogonal.

    Steering vectors with ``M (delta / lambda)(sin a - sin b)`` a nonzero
    integer (mod M) are orthogonal; with half-wavelength spacing the
    admissible sines are ``2 k / M``. Returns ``n`` angles alternating
    around broadside: k = start, start+1, start-1, start+2, ...
    """
    ks = [start]
    step = 1
    while len(ks) < n:
        ks.append(start + step)
        if len(ks) < n:
            ks.append(start - step)
        step += 1
    sines = np.array(ks) / (n_mics * spacing_over_wavelength)
    if np.any(np.abs(sines) >= 1):
        raise ValueError("too many orthogonal directions requested for this array")
    return np.arcsin(sines)


def correlated_steering(basis, kappa, rho, rng=None):
    """Unit-modulus-free steering surrogates with prescribed correlations.

    Given orthonormal ``basis`` columns ``e_0..e_N`` (the normalized ATFs) in
    ``C^M`` with ``N + 1 < M``, returns vectors ``d_r`` with ``||d_r||^2 = M``,
    ``|<d_r, e_r>|^2 = kappa M`` and ``|<d_r, e_s>|^2 = rho M`` for ``s != r``.
    Needs ``kappa + N rho <= 1``.
    """
    basis = np.asarray(basis, dtype=complex)
    m, n_vec = basis.shape
    n = n_vec - 1
    if kappa + n * rho > 1 + 1e-12:
        raise ValueError("kappa + N rho must not exceed 1")
    rng = np.random.default_rng(rng)
    resid = np.sqrt(max(1 - kappa - n * rho, 0.0))
    out = []
    for r in range(n_vec):
        coef = np.full(n_vec, np.sqrt(rho), dtype=complex)
        coef[r] = np.sqrt(kappa)
        coef *= np.exp(2j * np.pi * rng.random(n_vec))
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        w -= basis @ (basis.conj().T @ w)
        w /= np.linalg.norm(w)
        out.append(np.sqrt(m) * (basis @ coef + resid * w))
    return out
