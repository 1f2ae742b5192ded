"""Self-checks of the geometry and closed-form results, runnable from the CLI.

Each suite returns a list of :class:`Check` records. Randomized checks are
seeded, so a suite either always passes or always fails on a given build.
"""

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import hpd
from .array_model import ArrayGeometry, steering_matrix
from .beamformers import ds_beam_pattern
from .metrics import (AnalyticModel, analytic_mean_matrix, analytic_sir, misalignment_matrices,
                      mu_euclidean, mu_riemannian, orthogonal_ula_directions, output_sir,
                      population_segment_matrices, quadratic_sir, sir_bar)


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self):
        return asdict(self)


###############################################################################
# Random generators shared with the test-suite


def random_hpd(rng, m, cond=100.0):
    """Random HPD matrix with eigenvalues log-uniform in ``[1, cond]``."""
    q, _ = np.linalg.qr(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))
    w = np.exp(rng.uniform(0, np.log(cond), m))
    return hpd.hermitian_part((q * w) @ q.conj().T)


def random_commuting_set(rng, m, k, cond=100.0):
    """``k`` HPD matrices sharing one random unitary eigenbasis."""
    q, _ = np.linalg.qr(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))
    out = []
    for _ in range(k):
        w = np.exp(rng.uniform(0, np.log(cond), m))
        out.append(hpd.hermitian_part((q * w) @ q.conj().T))
    return out, q


def random_orthonormal_atfs(rng, m, n, scale_range=(0.5, 2.0)):
    """``n`` mutually orthogonal complex vectors with random norms."""
    q, _ = np.linalg.qr(rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n)))
    scales = rng.uniform(*scale_range, n)
    return [q[:, i] * scales[i] for i in range(n)]


def random_model(rng, n_int=None, m=12, dominant=False, rho_zero=False):
    """Random valid :class:`AnalyticModel` with ``0 < tau_j < 1``.

    ``kappa`` and ``rho`` are drawn so that steering vectors with these
    correlations exist, ``kappa + N_I rho <= 1`` (Bessel's inequality over
    the orthogonal ATFs). With ``dominant`` the desired source beats every
    duty-weighted interference, ``sigma_0^2 ||h0||^2 > sigma_j^2 tau_j ||h_j||^2``.
    """
    n_int = int(rng.integers(1, 6)) if n_int is None else n_int
    h0 = float(m * rng.uniform(0.5, 1.5))
    hn = m * rng.uniform(0.5, 1.5, n_int)
    tau = rng.uniform(0.05, 0.95, n_int)
    sigma0 = float(10 ** rng.uniform(-1, 1))
    if dominant:
        cap = sigma0 * h0 / (tau * hn)
        sigma = cap * rng.uniform(0.01, 0.99, n_int)
    else:
        sigma = 10 ** rng.uniform(-2, 2, n_int)
    kappa = float(rng.uniform(0.3, 1.0))
    rho = 0.0 if rho_zero else float(rng.uniform(0.0, min(0.9 * kappa, (1 - kappa) / n_int)))
    sigma_v = float(10 ** rng.uniform(-3, 1))
    return AnalyticModel(sigma0, sigma_v, sigma, tau, hn, h0, kappa, rho, m)


def sir_noise_derivative(model, rule, j, rel_step=1e-4):
    """Central difference of ``SIR_j`` in ``sigma_v^2`` with one Richardson step."""
    s = model.sigma_v_sq
    h = rel_step * s

    def d(step):
        hi = analytic_sir(model.with_noise(s + step), rule)[j]
        lo = analytic_sir(model.with_noise(s - step), rule)[j]
        return (hi - lo) / (2 * step)

    return (4 * d(h / 2) - d(h)) / 3


def two_interference_setup(m=12, sigma_v_sq=1.0):
    """Anechoic two-interference alternating setting with orthogonal steering.

    Returns the model, the array, the wavelength, the three source angles
    and the matching steering vectors (which are also the ATFs).
    """
    geom = ArrayGeometry.ula(m, 0.5)
    wavelength = 1.0
    thetas = orthogonal_ula_directions(m, 3)
    d = steering_matrix(geom, thetas, wavelength)
    model = AnalyticModel(1.0, sigma_v_sq, [1.0, 1.0], [0.5, 0.5], [m, m], m, 1.0, 0.0, m)
    return model, geom, wavelength, thetas, d


###############################################################################
# Suites


def _run(suite, name, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(suite, name, bool(ok), detail, time.perf_counter() - t0)


def suite_geometry(seed=0, n=30):
    rng = np.random.default_rng(seed)
    s = "geometry"

    def commuting():
        worst = 0.0
        for _ in range(n):
            ms, _ = random_commuting_set(rng, int(rng.integers(3, 13)), int(rng.integers(2, 11)))
            worst = max(worst, np.linalg.norm(hpd.karcher_mean(ms) - hpd.commuting_mean(ms)))
        return worst < 1e-8, f"max Frobenius gap {worst:.2e}"

    def roundtrip():
        worst = 0.0
        for _ in range(n):
            m = int(rng.integers(2, 9))
            a, b = random_hpd(rng, m), random_hpd(rng, m)
            worst = max(worst, np.linalg.norm(hpd.exp_map(a, hpd.log_map(a, b)) - b) / np.linalg.norm(b))
        return worst < 1e-9, f"max relative error {worst:.2e}"

    def midpoint():
        worst = 0.0
        for _ in range(n):
            m = int(rng.integers(2, 9))
            a, b = random_hpd(rng, m), random_hpd(rng, m)
            worst = max(worst, np.linalg.norm(hpd.karcher_mean([a, b]) - hpd.geodesic(a, b, 0.5)))
        return worst < 1e-8, f"max Frobenius gap {worst:.2e}"

    def loewner():
        worst = np.inf
        for _ in range(n):
            ms = [random_hpd(rng, 6) for _ in range(int(rng.integers(2, 8)))]
            gap = hpd.euclidean_mean(ms) - hpd.karcher_mean(ms)
            worst = min(worst, np.linalg.eigvalsh(gap).min())
        return worst >= -1e-8, f"min eigenvalue of G_E - G_R {worst:.2e}"

    def traces():
        worst = np.inf
        for _ in range(n):
            ms = [random_hpd(rng, 5) for _ in range(int(rng.integers(2, 8)))]
            tr = np.real(np.trace(hpd.log_euclidean_mean(ms)) - np.trace(hpd.karcher_mean(ms)))
            worst = min(worst, tr)
        return worst >= -1e-8, f"min tr(G_LE) - tr(G_R) {worst:.2e}"

    def serialization():
        g = random_hpd(rng, 4)
        return np.array_equal(hpd.loads(hpd.dumps(g)), g), "JSON round-trip"

    return [_run(s, "commuting_oracle", commuting), _run(s, "log_exp_roundtrip", roundtrip),
            _run(s, "two_point_midpoint", midpoint), _run(s, "loewner_order", loewner),
            _run(s, "trace_order", traces), _run(s, "json_roundtrip", serialization)]


def suite_coefficients(seed=1, n=20):
    rng = np.random.default_rng(seed)
    s = "coefficients"

    def build():
        m = int(rng.integers(4, 13))
        n_int = int(rng.integers(1, m - 1))
        n_seg = int(rng.integers(2, 9))
        atfs = random_orthonormal_atfs(rng, m, n_int + 1)
        act = rng.random((n_int, n_seg)) < 0.5
        act[:, 0] |= ~act.any(axis=1)  # each interference active at least once
        tau = act.mean(axis=1)
        model = AnalyticModel(float(rng.uniform(0.5, 2)), float(10 ** rng.uniform(-2, 0)),
                              10 ** rng.uniform(-1, 1, n_int), tau,
                              np.array([np.vdot(h, h).real for h in atfs[1:]]),
                              float(np.vdot(atfs[0], atfs[0]).real), n_mics=m)
        return model, atfs[0], atfs[1:], population_segment_matrices(model, atfs[0], atfs[1:], act)

    def riemannian():
        worst = 0.0
        for _ in range(n):
            model, h0, hs, segs = build()
            worst = max(worst, np.linalg.norm(hpd.karcher_mean(segs) - analytic_mean_matrix(model, h0, hs, "riemannian")))
        return worst < 1e-6, f"max Frobenius gap {worst:.2e}"

    def euclidean():
        worst = 0.0
        for _ in range(n):
            model, h0, hs, segs = build()
            worst = max(worst, np.linalg.norm(hpd.euclidean_mean(segs) - analytic_mean_matrix(model, h0, hs, "euclidean")))
        return worst < 1e-12, f"max Frobenius gap {worst:.2e}"

    return [_run(s, "riemannian_form", riemannian), _run(s, "euclidean_form", euclidean)]


def suite_orderings(seed=2, n=300):
    rng = np.random.default_rng(seed)
    s = "orderings"

    def sir_order():
        # the ordering is guaranteed when rho = 0 or when the desired source
        # dominates (SIR_j(G_E) >= 1); outside that regime it can fail
        bad = 0
        for i in range(n):
            model = random_model(rng, dominant=bool(i % 2), rho_zero=not i % 2)
            r, e = analytic_sir(model, "riemannian"), analytic_sir(model, "euclidean")
            bad += int(np.sum(r - e <= 1e-12 * np.abs(e)))
        return bad == 0, f"{bad} violations in {n} models"

    def noise_derivatives():
        bad = 0
        for _ in range(n):
            model = random_model(rng, dominant=True)
            for j in range(model.n_interferences):
                dr = sir_noise_derivative(model, "riemannian", j)
                de = sir_noise_derivative(model, "euclidean", j)
                bad += int(not dr < de < 0)
        return bad == 0, f"{bad} violations in {n} models"

    def amgm():
        sj, hn, sv = 10 ** rng.uniform(-3, 3, (3, n))
        tau = rng.uniform(0.01, 0.99, n)
        ok = np.all(mu_riemannian(sj, hn, sv, tau) < mu_euclidean(sj, tau))
        ends = np.allclose(mu_riemannian(sj, hn, sv, 1.0), sj) and np.all(mu_riemannian(sj, hn, sv, 0.0) == 0)
        return ok and ends, "mu_R < mu_E inside (0, 1), equal at the ends"

    def total():
        bad = 0
        for _ in range(n):
            model = random_model(rng)
            bad += int(not analytic_sir(model, "riemannian", total=True) > analytic_sir(model, "euclidean", total=True))
        return bad == 0, f"{bad} violations in {n} models"

    def atf_sir_order():
        bad = 0
        for _ in range(n // 5):
            m = 8
            h0 = random_orthonormal_atfs(rng, m, 1)[0]
            # interferences only need to be orthogonal to h0, not to each other
            proj = np.eye(m) - np.outer(h0, h0.conj()) / np.vdot(h0, h0).real
            hs = [proj @ (rng.standard_normal(m) + 1j * rng.standard_normal(m)) for _ in range(3)]
            segs = []
            for _ in range(4):
                g = np.outer(h0, h0.conj()) + 0.1 * np.eye(m)
                for h in hs:
                    if rng.random() < 0.5:
                        g = g + 10 ** rng.uniform(-1, 1) * np.outer(h, h.conj())
                segs.append(hpd.hermitian_part(g))
            gr, ge = hpd.karcher_mean(segs), hpd.euclidean_mean(segs)
            bad += sum(int(sir_bar(gr, h0, h) < sir_bar(ge, h0, h) * (1 - 1e-9)) for h in hs)
        return bad == 0, f"{bad} violations"

    return [_run(s, "sir_order", sir_order), _run(s, "noise_derivatives", noise_derivatives),
            _run(s, "mu_am_gm", amgm), _run(s, "total_sir_order", total), _run(s, "atf_sir_order", atf_sir_order)]


def suite_two_interference(seed=3):
    s = "two_interference"
    model, geom, wl, thetas, d = two_interference_setup()
    m, sv = 12, 1.0

    def closed():
        r = analytic_sir(model, "riemannian")
        e = analytic_sir(model, "euclidean")
        ok = np.allclose(r, np.sqrt(m / sv + 1), rtol=0, atol=1e-12) and np.allclose(
            e, 2 * (m + sv) / (m + 2 * sv), rtol=0, atol=1e-12)
        return ok, f"riemannian {r[0]:.6f}, euclidean {e[0]:.6f}"

    def pipeline():
        segs = population_segment_matrices(model, d[0], d[1:], [[True, False], [False, True]])
        grid = np.unique(np.concatenate([np.deg2rad(np.arange(-70, 70.5, 0.5)), thetas]))
        got = []
        for g in (hpd.karcher_mean(segs), hpd.euclidean_mean(segs)):
            got.append(output_sir(ds_beam_pattern(g, grid, geom, wl), thetas[0], thetas[1:]).mean)
        ok = abs(got[0] - np.sqrt(13)) < 1e-6 and abs(got[1] - 26 / 14) < 1e-6
        return ok, f"pattern SIR riemannian {got[0]:.8f}, euclidean {got[1]:.8f}"

    return [_run(s, "closed_form", closed), _run(s, "population_pipeline", pipeline)]


def suite_misalignment(seed=4):
    s = "misalignment"
    rng = np.random.default_rng(seed)

    def sweep():
        m = 12
        atfs = random_orthonormal_atfs(rng, m, 3, (1.0, 1.0))
        atfs = [a * np.sqrt(m) for a in atfs]
        model = AnalyticModel(1.0, 0.01, [4.0, 2.0], [0.5, 0.5], [m, m], m)
        worst, eq = np.inf, np.inf
        for alpha in np.linspace(0, 0.5, 11):
            g1, g2 = misalignment_matrices(model, alpha, atfs[0], atfs[1:])
            gr, ge = hpd.karcher_mean([g1, g2]), hpd.euclidean_mean([g1, g2])
            for h in atfs[1:]:
                r, e = quadratic_sir(gr, atfs[0], h), quadratic_sir(ge, atfs[0], h)
                worst = min(worst, r - e)
                if alpha == 0.5:
                    eq = abs(r - e)
        return worst >= -1e-12 and eq < 1e-9, f"min gap {worst:.2e}, gap at 1/2 {eq:.2e}"

    return [_run(s, "misalignment_sweep", sweep)]


SUITES = {
    "geometry": suite_geometry,
    "coefficients": suite_coefficients,
    "orderings": suite_orderings,
    "two_interference": suite_two_interference,
    "misalignment": suite_misalignment,
}


def run_suite(name="all"):
    if name == "all":
        return [c for fn in SUITES.values() for c in fn()]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name]()
