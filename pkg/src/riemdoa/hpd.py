"""Geometry of Hermitian positive-definite (HPD) matrices.

Points on the manifold are plain ``numpy`` arrays of shape ``(M, M)``.
Public functions validate their inputs with :func:`check_hpd`; the private
``_``-prefixed helpers skip validation and are used inside iterations.

Three geometries are provided: affine-invariant (Riemannian), Log-Euclidean
and Euclidean. All matrix functions go through a unitary eigendecomposition
and the result is re-symmetrized, ``(X + X^H) / 2``, so that Hermitian
invariants hold to machine precision.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidIndex,
    NoConvergence,
    NoConvergenceWarning,
    NonFiniteEigenvalue,
    NotCommuting,
    NotHermitian,
    NotPositiveDefinite,
)

HERMITIAN_RTOL = 1e-12
COMMUTATOR_RTOL = 1e-8


###############################################################################
# Validation


def hermitian_part(a):
    """Return ``(a + a^H) / 2``."""
    a = np.asarray(a)
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def _check_square(a, name):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteEigenvalue(f"{name} has non-finite entries")
    return a


def check_tangent(t, name="tangent"):
    """Validate a Hermitian (not necessarily definite) matrix."""
    t = _check_square(t, name)
    scale = max(np.max(np.abs(t)), np.finfo(float).tiny)
    if np.max(np.abs(t - t.conj().T)) > HERMITIAN_RTOL * scale:
        raise NotHermitian(f"{name} is not Hermitian")
    return hermitian_part(t)


def check_hpd(g, loading=0.0, name="matrix"):
    """Validate ``g`` as an HPD matrix and return a Hermitian copy.

    Parameters
    ----------
    g : array_like, shape (M, M)
        Candidate matrix.
    loading : float, default=0.0
        Diagonal loading added before the definiteness check. The geometry
        itself never loads; callers decide.
    name : str
        Used in error messages.

    Returns
    -------
    ndarray, shape (M, M)
        ``hermitian_part(g) + loading * I``.
    """
    g = check_tangent(g, name)
    if loading < 0:
        raise ValueError("loading must be nonnegative")
    if loading:
        g = g + loading * np.eye(g.shape[0])
    w = _eigvalsh(g)
    if not w[0] > 0:
        raise NotPositiveDefinite(f"{name} is not positive definite (min eigenvalue {w[0]:.3e})")
    return g


def _check_same_dim(*mats):
    dims = {m.shape for m in mats}
    if len(dims) != 1:
        raise DimensionMismatch(f"matrix shapes differ: {sorted(dims)}")


def _check_list(ms, name="matrices"):
    ms = [check_hpd(m, name=name) for m in ms]
    if not ms:
        raise EmptyInput(f"{name} list is empty")
    _check_same_dim(*ms)
    return ms


###############################################################################
# Spectral calculus


def _eigvalsh(g):
    try:
        w = np.linalg.eigvalsh(g)
    except np.linalg.LinAlgError as exc:
        raise NonFiniteEigenvalue("eigendecomposition did not converge") from exc
    if not np.all(np.isfinite(w)):
        raise NonFiniteEigenvalue("non-finite eigenvalues")
    return w


def _eigh(g):
    try:
        w, u = np.linalg.eigh(g)
    except np.linalg.LinAlgError as exc:
        raise NonFiniteEigenvalue("eigendecomposition did not converge") from exc
    if not np.all(np.isfinite(w)):
        raise NonFiniteEigenvalue("non-finite eigenvalues")
    return w, u


def _from_eig(w, u):
    return hermitian_part((u * w) @ u.conj().T)


def _apply(g, fun):
    w, u = _eigh(g)
    return _from_eig(fun(w), u)


def _sqrtm(g):
    return _apply(g, np.sqrt)


def _invsqrtm(g):
    return _apply(g, lambda w: 1.0 / np.sqrt(w))


def _logm(g):
    return _apply(g, np.log)


def _expm(t):
    return _apply(t, np.exp)


def _powm(g, p):
    return _apply(g, lambda w: w ** p)


_FUNCTIONS = {
    "sqrt": np.sqrt,
    "inv_sqrt": lambda w: 1.0 / np.sqrt(w),
    "log": np.log,
    "exp": np.exp,
}


def hpd_matrix_function(g, fn):
    """Apply a scalar function to the eigenvalues of a Hermitian matrix.

    Parameters
    ----------
    g : array_like, shape (M, M)
        HPD matrix, or a Hermitian tangent matrix when ``fn="exp"``.
    fn : {"sqrt", "inv_sqrt", "log", "exp"} or callable
        ``"exp_of_tangent"`` is accepted as an alias of ``"exp"``. A callable
        receives the real eigenvalue vector and must return a vector.

    Returns
    -------
    ndarray, shape (M, M)
        ``U f(Lambda) U^H``, re-symmetrized.
    """
    if fn == "exp_of_tangent":
        fn = "exp"
    if callable(fn):
        fun = fn
        g = check_tangent(g)
    elif fn in _FUNCTIONS:
        fun = _FUNCTIONS[fn]
        g = check_tangent(g) if fn == "exp" else check_hpd(g)
    else:
        raise ValueError(f"unknown matrix function {fn!r}")
    return _apply(g, fun)


def sqrtm(g):
    return hpd_matrix_function(g, "sqrt")


def invsqrtm(g):
    return hpd_matrix_function(g, "inv_sqrt")


def logm(g):
    return hpd_matrix_function(g, "log")


def expm(t):
    return hpd_matrix_function(t, "exp")


def powm(g, p):
    """Real power ``g**p`` of an HPD matrix."""
    return _powm(check_hpd(g), p)


###############################################################################
# Distances and maps


def distance_riemann(g1, g2):
    """Affine-invariant distance ``||log(g2^{-1/2} g1 g2^{-1/2})||_F``."""
    g1, g2 = check_hpd(g1, name="g1"), check_hpd(g2, name="g2")
    _check_same_dim(g1, g2)
    # generalized eigenvalues of (g1, g2) equal those of g2^{-1/2} g1 g2^{-1/2}
    isq = _invsqrtm(g2)
    w = _eigvalsh(hermitian_part(isq @ g1 @ isq))
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def distance_logeuclid(g1, g2):
    """Log-Euclidean distance ``||log g1 - log g2||_F``."""
    g1, g2 = check_hpd(g1, name="g1"), check_hpd(g2, name="g2")
    _check_same_dim(g1, g2)
    return float(np.linalg.norm(_logm(g1) - _logm(g2), "fro"))


def _log_map(base, g):
    sq, isq = _sqrtm(base), _invsqrtm(base)
    return hermitian_part(sq @ _logm(hermitian_part(isq @ g @ isq)) @ sq)


def _exp_map(base, t):
    sq, isq = _sqrtm(base), _invsqrtm(base)
    return hermitian_part(sq @ _expm(hermitian_part(isq @ t @ isq)) @ sq)


def log_map(base, g):
    """Riemannian logarithm of ``g`` at ``base`` (a Hermitian tangent matrix)."""
    base, g = check_hpd(base, name="base"), check_hpd(g)
    _check_same_dim(base, g)
    return _log_map(base, g)


def exp_map(base, t):
    """Riemannian exponential of tangent ``t`` at ``base``."""
    base, t = check_hpd(base, name="base"), check_tangent(t)
    _check_same_dim(base, t)
    return _exp_map(base, t)


def _geodesic(a, b, t):
    sq, isq = _sqrtm(a), _invsqrtm(a)
    return hermitian_part(sq @ _powm(hermitian_part(isq @ b @ isq), t) @ sq)


def geodesic(a, b, t):
    """Point at fraction ``t`` along the affine-invariant geodesic from a to b.

    ``a #_t b = a^{1/2} (a^{-1/2} b a^{-1/2})^t a^{1/2}``.
    """
    a, b = check_hpd(a, name="a"), check_hpd(b, name="b")
    _check_same_dim(a, b)
    return _geodesic(a, b, t)


###############################################################################
# Means


@dataclass(frozen=True)
class MeanConfig:
    """Stopping rule for :func:`karcher_mean`.

    ``tolerance`` bounds the Frobenius norm of the tangent-space mean of the
    scale-normalized inputs (see :func:`karcher_mean`).
    """

    tolerance: float = 1e-9
    max_iterations: int = 200

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class MeanInfo:
    n_iter: int
    converged: bool
    residual: float


def euclidean_mean(ms):
    """Entrywise arithmetic mean."""
    ms = _check_list(ms)
    return hermitian_part(np.mean(ms, axis=0))


def log_euclidean_mean(ms):
    """``exp(mean_k log G_k)``."""
    ms = _check_list(ms)
    return _expm(np.mean([_logm(m) for m in ms], axis=0))


def _karcher_step(whitened_eigs):
    """Step ``2 / mean_k((c_k + 1) / (c_k - 1) log c_k)``, ``c_k`` the condition
    number of the k-th whitened input (the summand tends to 2 as c_k -> 1)."""
    terms = []
    for w in whitened_eigs:
        c = w.max() / w.min()
        terms.append((c + 1) / (c - 1) * np.log(c) if c > 1 + 1e-10 else 2.0)
    return 2.0 / np.mean(terms)


def karcher_mean(ms, cfg=None, *, strict=False, return_info=False):
    """Riemannian (Karcher) mean under the affine-invariant metric.

    Fixed-point iteration started at the Euclidean mean: average the
    Log-maps at the current estimate, move along the Exp-map, stop once the
    averaged tangent vector has Frobenius norm below ``cfg.tolerance``.
    The unit step of the plain fixed-point iteration is kept while the
    tangent norm at least halves per iteration (it is exact for commuting
    inputs). The first time it does not, the iteration switches for good to
    the condition-number step of Bini and Iannazzo, which stays convergent
    when the inputs are far apart and the unit step oscillates or diverges.

    Inputs are divided by ``trace(euclidean_mean) / M`` before iterating and
    the result is scaled back. The mean commutes with positive scaling, so
    this only makes the tolerance relative to the data scale.

    Parameters
    ----------
    ms : sequence of ndarray, shape (M, M)
        HPD matrices.
    cfg : MeanConfig, optional
    strict : bool, default=False
        Raise :class:`NoConvergence` instead of warning when
        ``max_iterations`` is reached.
    return_info : bool, default=False
        Also return a :class:`MeanInfo`.

    Returns
    -------
    mean : ndarray, shape (M, M)
    info : MeanInfo
        Only if ``return_info``.
    """
    cfg = cfg or MeanConfig()
    ms = _check_list(ms)
    scale = np.real(np.trace(np.mean(ms, axis=0))) / ms[0].shape[0]
    ms = [m / scale for m in ms]

    g = hermitian_part(np.mean(ms, axis=0))
    residual = np.inf
    damped = False
    n_iter = 0
    converged = False
    while n_iter < cfg.max_iterations:
        n_iter += 1
        sq, isq = _sqrtm(g), _invsqrtm(g)
        eigs = [_eigh(hermitian_part(isq @ m @ isq)) for m in ms]
        whitened = hermitian_part(np.mean([_from_eig(np.log(w), u) for w, u in eigs], axis=0))
        p_bar = hermitian_part(sq @ whitened @ sq)
        prev, residual = residual, float(np.linalg.norm(p_bar, "fro"))
        if residual < cfg.tolerance:
            converged = True
            break
        damped = damped or residual > 0.5 * prev
        step = _karcher_step([w for w, _ in eigs]) if damped else 1.0
        g = hermitian_part(sq @ _expm(step * whitened) @ sq)

    g = g * scale
    if not converged:
        msg = f"Karcher mean did not converge in {n_iter} iterations (residual {residual:.3e})"
        if strict:
            raise NoConvergence(msg, mean=g, n_iter=n_iter)
        warnings.warn(msg, NoConvergenceWarning, stacklevel=2)
    if return_info:
        return g, MeanInfo(n_iter=n_iter, converged=converged, residual=residual)
    return g


def _check_commuting(ms, rtol):
    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            a, b = ms[i], ms[j]
            comm = np.linalg.norm(a @ b - b @ a, "fro")
            if comm > rtol * np.linalg.norm(a, "fro") * np.linalg.norm(b, "fro"):
                raise NotCommuting(f"matrices {i} and {j} do not commute (commutator {comm:.3e})")


def commuting_mean(ms, rtol=COMMUTATOR_RTOL):
    """Riemannian mean of pairwise commuting HPD matrices, ``prod_k G_k^{1/K}``.

    The product is evaluated in a shared eigenbasis: eigenvectors of a
    generic positive combination of the inputs diagonalize every input, and
    the mean's eigenvalues are the geometric means of the per-matrix ones.
    """
    ms = _check_list(ms)
    _check_commuting(ms, rtol)
    k = len(ms)
    # irrational weights make accidental eigenvalue collisions in the
    # combination practically impossible
    weights = np.sqrt(np.arange(2, k + 2)) / np.array([np.linalg.norm(m, 2) for m in ms])
    _, u = _eigh(hermitian_part(sum(w * m for w, m in zip(weights, ms))))
    log_eigs = np.mean([np.log(np.real(np.einsum("ij,jk,ki->i", u.conj().T, m, u))) for m in ms], axis=0)
    return _from_eig(np.exp(log_eigs), u)


###############################################################################
# Streaming estimators


def streaming_riemannian_update(r_prev, g_i, i):
    """One step of the recursive Riemannian mean.

    ``R_i = R_{i-1} #_{1/i} G_i``; for ``i == 1`` the observation is returned.
    """
    if int(i) != i or i < 1:
        raise InvalidIndex(f"segment index must be a positive integer, got {i}")
    r_prev, g_i = check_hpd(r_prev, name="r_prev"), check_hpd(g_i)
    _check_same_dim(r_prev, g_i)
    if i == 1:
        return g_i
    return _geodesic(r_prev, g_i, 1.0 / i)


def streaming_euclidean_update(e_prev, z_outer, n):
    """Running arithmetic mean, ``E_n = (n-1)/n E_{n-1} + z_outer / n``.

    ``n`` counts the frames consumed so far, including this one.
    """
    if int(n) != n or n < 1:
        raise InvalidIndex(f"frame count must be a positive integer, got {n}")
    e_prev = np.asarray(e_prev)
    z_outer = check_tangent(z_outer, name="z_outer")
    if e_prev.shape != z_outer.shape:
        raise DimensionMismatch(f"shapes differ: {e_prev.shape} vs {z_outer.shape}")
    if n == 1:
        return z_outer
    return hermitian_part((n - 1) / n * e_prev + z_outer / n)


class RecursiveRiemannianMean:
    """Stateful wrapper around :func:`streaming_riemannian_update`.

    Single writer only. ``mean`` starts at the identity when ``dim`` is given.
    """

    def __init__(self, dim=None):
        self.count = 0
        self.mean = None if dim is None else np.eye(dim, dtype=complex)

    def update(self, g):
        if self.mean is None:
            self.mean = np.eye(np.asarray(g).shape[0], dtype=complex)
        self.count += 1
        self.mean = streaming_riemannian_update(self.mean, g, self.count)
        return self.mean


class RunningEuclideanMean:
    """Stateful wrapper around :func:`streaming_euclidean_update`."""

    def __init__(self):
        self.count = 0
        self.mean = None

    def update_frame(self, z):
        z = np.asarray(z).reshape(-1)
        return self.update(np.outer(z, z.conj()))

    def update(self, outer):
        self.count += 1
        prev = np.zeros_like(outer) if self.mean is None else self.mean
        self.mean = streaming_euclidean_update(prev, outer, self.count)
        return self.mean


###############################################################################
# Serialization


def to_json_dict(g):
    """``{"dim", "re", "im"}`` with row-major nested lists."""
    g = np.asarray(g)
    return {"dim": int(g.shape[0]), "re": np.real(g).tolist(), "im": np.imag(g).tolist()}


def from_json_dict(d):
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    g = re + 1j * im
    if g.shape != (d["dim"], d["dim"]):
        raise DimensionMismatch(f"declared dim {d['dim']} does not match data shape {g.shape}")
    return g


def dumps(g):
    return json.dumps(to_json_dict(g))


def loads(s):
    return from_json_dict(json.loads(s))
