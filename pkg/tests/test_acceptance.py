"""Acceptance criteria AC1 to AC12.

Every test here carries an ``acceptance`` marker; ``conftest.py`` prints one
PASS/FAIL/SKIP line per criterion after the run. Runtime limits are asserted
alongside the numerical tolerances.
"""

import math
import os
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from diagest.bounds import EpsDelta, bound_row_dependent, best_rank_r_residuals, matrix_constants
from diagest.diagpp import DiagppConfig, diagpp
from diagest.estimators import (
    accumulate_diagonal,
    estimate_diagonal,
    hutchinson_trace_from_estimate,
    reference_variances,
    relative_error,
)
from diagest.harness import ExperimentSpec, load_matrix, run_experiment
from diagest.oracle import (
    PowerLawSpectrumSpec,
    eigen_factorize,
    generate_power_law_psd,
    load_matrix_market,
    make_dense_operator,
)
from diagest.probes import DEFAULT_SEED, GAUSSIAN, RADEMACHER, ProbeStream

from _oracles import binomial_upper_count, exhaustive_rademacher_moments, loglog_slope, off_diagonal_mass

acceptance = pytest.mark.acceptance

A4 = np.array([
    [4.0, 1.0, -2.0, 0.5],
    [1.0, 3.0, 0.0, 1.5],
    [-2.0, 0.0, 2.0, -1.0],
    [0.5, 1.5, -1.0, 1.0],
])


@lru_cache(maxsize=None)
def power_law(n, c):
    return load_matrix(f"powerlaw:{n},{c}")


def medians(source, estimator, grid, trials, percentile=50):
    spec = ExperimentSpec(source, estimator=estimator, s_grid=list(grid), trials=trials, percentiles=[percentile])
    n, c = source.split(":")[1].split(",")
    records = run_experiment(spec, power_law(int(n), float(c)))
    return {r.s: r.relative_error for r in records}


# --- AC1 -------------------------------------------------------------------


@acceptance("AC1", "exhaustive 4x4 oracle: mean and variance to 1e-12, < 1 s")
@pytest.mark.parametrize("s", [1, 2])
def test_ac1_exhaustive_oracle(s, record_property):
    start = time.perf_counter()
    mean, var, _ = exhaustive_rademacher_moments(A4, s)
    expected_var = off_diagonal_mass(A4) / s
    elapsed = time.perf_counter() - start
    np.testing.assert_allclose(mean, np.diag(A4), rtol=0, atol=1e-12)
    np.testing.assert_allclose(var, expected_var, rtol=0, atol=1e-12)
    np.testing.assert_allclose(reference_variances(A4, RADEMACHER, s), expected_var, rtol=0, atol=1e-12)

    # the package estimator reproduces the enumerated samples pattern by pattern
    import itertools

    from diagest.estimators import DiagonalAccumulator

    total = np.zeros(4)
    sq = np.zeros(4)
    for signs in itertools.product((-1.0, 1.0), repeat=4 * s):
        V = np.array(signs).reshape(s, 4).T
        est = DiagonalAccumulator(4).absorb_block(V, A4 @ V).extract().values
        total += est
        sq += est ** 2
    count = 2 ** (4 * s)
    pkg_mean = total / count
    np.testing.assert_allclose(pkg_mean, np.diag(A4), rtol=0, atol=1e-12)
    np.testing.assert_allclose(sq / count - pkg_mean ** 2, expected_var, rtol=0, atol=1e-12)
    elapsed = time.perf_counter() - start
    record_property("detail", f"s={s}: {elapsed:.3f}s")
    assert elapsed < 1.0


# --- AC2 -------------------------------------------------------------------


@acceptance("AC2", "Hutchinson consistency on 100x100 to 1e-12 relative, < 1 s")
def test_ac2_hutchinson_consistency(record_property):
    start = time.perf_counter()
    B = np.random.default_rng(2).standard_normal((100, 100))
    A = B + B.T
    s = 40
    acc = accumulate_diagonal(make_dense_operator(A), s, ProbeStream(100, RADEMACHER, DEFAULT_SEED), log_size=s)
    V = np.column_stack([v for v, _ in acc.log])
    direct = sum(float(V[:, k] @ A @ V[:, k]) for k in range(s)) / s
    summed = hutchinson_trace_from_estimate(acc.extract())
    elapsed = time.perf_counter() - start
    rel = abs(summed - direct) / abs(direct)
    record_property("detail", f"relative difference {rel:.2e}, {elapsed:.3f}s")
    assert rel <= 1e-12
    assert elapsed < 1.0


# --- AC3 -------------------------------------------------------------------


@acceptance("AC3", "Rademacher (eps, delta) coverage, n=200 c=1, 2000 trials, < 1 min")
@pytest.mark.parametrize("i", [0, 57, 199])
def test_ac3_rademacher_coverage(i, record_property):
    start = time.perf_counter()
    eps, delta, trials = 0.5, 0.1, 2000
    loaded = power_law(200, 1.0)
    A = loaded.dense
    op = loaded.op
    s = bound_row_dependent(RADEMACHER, EpsDelta(eps, delta)).s
    assert s == 24
    threshold = eps ** 2 * (A[i] @ A[i] - A[i, i] ** 2)
    assert threshold > 0
    failures = 0
    for t in range(trials):
        est = estimate_diagonal(op, s, ProbeStream(200, RADEMACHER, DEFAULT_SEED, t, key=(i,))).values
        failures += (est[i] - A[i, i]) ** 2 > threshold
    limit = binomial_upper_count(trials, delta, 0.99)
    elapsed = time.perf_counter() - start
    record_property("detail", f"i={i} s={s}: {failures}/{trials} failures (limit {limit})")
    assert failures <= limit
    assert elapsed < 60.0


# --- AC4 -------------------------------------------------------------------


@acceptance("AC4", "Gaussian validity floor: s=16 at eps=1, delta=0.1; eps>1 invalid")
def test_ac4_gaussian_floor(record_property):
    res = bound_row_dependent(GAUSSIAN, EpsDelta(1.0, 0.1))
    record_property("detail", f"s={res.s} (value {res.value:.4f})")
    assert res.s == 16
    assert res.valid
    assert round(res.value, 1) == 15.3
    for eps in (1.0 + 1e-9, 1.5, 3.0):
        bad = bound_row_dependent(GAUSSIAN, EpsDelta(eps, 0.1))
        assert not bad.valid
        assert "(0, 1]" in bad.validity_note
    assert bound_row_dependent(RADEMACHER, EpsDelta(1.5, 0.1)).valid


# --- AC5 -------------------------------------------------------------------


@acceptance("AC5", "Gaussian variance law on 50x50 (s=10, 5000 trials) and s=1 heavy tail, < 2 min")
def test_ac5_gaussian_variance_law(record_property):
    start = time.perf_counter()
    n, trials = 50, 5000
    B = np.random.default_rng(5).standard_normal((n, n))
    A = (B + B.T) / 2
    op = make_dense_operator(A)

    def samples(dist, s):
        return np.array([estimate_diagonal(op, s, ProbeStream(n, dist, DEFAULT_SEED, t, key=(s,))).values
                         for t in range(trials)])

    s = 10
    emp = samples(GAUSSIAN, s).var(axis=0, ddof=1)
    theory = off_diagonal_mass(A) / (s - 2)
    within = np.abs(emp / theory - 1) <= 0.10
    frac = float(np.mean(within))

    g1 = samples(GAUSSIAN, 1).var(axis=0, ddof=1)
    r1 = samples(RADEMACHER, 1).var(axis=0, ddof=1)
    heavy = float(np.median(g1 / r1))
    elapsed = time.perf_counter() - start
    record_property("detail", f"{frac:.0%} of elements within 10%, median G/R variance at s=1 = {heavy:.1f}, "
                              f"{elapsed:.1f}s")
    assert frac >= 0.90
    assert heavy >= 2.0
    assert elapsed < 120.0


# --- AC6 -------------------------------------------------------------------


@acceptance("AC6", "small-s ordering, n=1000 c=1, 100 trials, p90, < 2 min")
def test_ac6_small_s_ordering(record_property):
    start = time.perf_counter()
    grid = [1, 2, 4, 256]
    rad = medians("powerlaw:1000,1.0", "rademacher", grid, 100, percentile=90)
    gau = medians("powerlaw:1000,1.0", "gaussian", grid, 100, percentile=90)
    elapsed = time.perf_counter() - start
    gap = abs(gau[256] / rad[256] - 1)
    record_property("detail", ", ".join(f"s={s}: R {rad[s]:.3g} G {gau[s]:.3g}" for s in grid)
                    + f", gap at 256 = {gap:.1%}, {elapsed:.1f}s")
    for s in (1, 2, 4):
        assert rad[s] < gau[s]
    assert gap <= 0.15
    assert elapsed < 120.0


# --- AC7 -------------------------------------------------------------------


@acceptance("AC7", "median error strictly increasing in c, n=1000, 50 trials, < 5 min")
def test_ac7_spectrum_difficulty(record_property):
    start = time.perf_counter()
    grid = [8, 16, 32, 64, 128, 256, 512]
    by_c = {c: medians(f"powerlaw:1000,{c}", "rademacher", grid, 50) for c in (0.5, 1.0, 1.5)}
    elapsed = time.perf_counter() - start
    record_property("detail", f"s=8: {by_c[0.5][8]:.3g} < {by_c[1.0][8]:.3g} < {by_c[1.5][8]:.3g}, "
                              f"s=512: {by_c[0.5][512]:.3g} < {by_c[1.0][512]:.3g} < {by_c[1.5][512]:.3g}, "
                              f"{elapsed:.1f}s")
    for s in grid:
        assert by_c[0.5][s] < by_c[1.0][s] < by_c[1.5][s], s
    assert elapsed < 300.0


# --- AC8 -------------------------------------------------------------------


@acceptance("AC8", "Diag++ exact on rank-10 PSD, n=500, s=60, 20 seeds, < 10 s")
def test_ac8_diagpp_low_rank(record_property):
    start = time.perf_counter()
    n, r = 500, 10
    worst = 0.0
    for seed in range(20):
        B = np.random.default_rng(seed).standard_normal((n, r))
        A = B @ B.T
        cfg = DiagppConfig(60)
        assert cfg.sketch == 20
        res = diagpp(make_dense_operator(A), cfg, ProbeStream(n, RADEMACHER, DEFAULT_SEED, seed))
        assert res.matvecs_used == 60
        worst = max(worst, relative_error(res.diagonal, np.diag(A)))
    elapsed = time.perf_counter() - start
    record_property("detail", f"worst relative error {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


# --- AC9 / AC10 ------------------------------------------------------------

PP_GRID = [24, 32, 48, 64, 96, 128, 192, 256, 384, 512]
SLOPE_GRID = [32, 64, 128, 256, 512]


@acceptance("AC9", "Diag++ beats plain at s>=96 on c=1.5; within 3x on c=0.5, 10 trials, < 5 min")
def test_ac9_diagpp_superiority(record_property):
    start = time.perf_counter()
    steep_pp = medians("powerlaw:1000,1.5", "diagpp", PP_GRID, 10)
    steep_plain = medians("powerlaw:1000,1.5", "rademacher", PP_GRID, 10)
    flat_pp = medians("powerlaw:1000,0.5", "diagpp", PP_GRID, 10)
    flat_plain = medians("powerlaw:1000,0.5", "rademacher", PP_GRID, 10)
    elapsed = time.perf_counter() - start
    worst_flat = max(flat_pp[s] / flat_plain[s] for s in PP_GRID)
    record_property("detail", f"c=1.5 s=96: pp {steep_pp[96]:.3g} vs plain {steep_plain[96]:.3g}, "
                              f"s=512: pp {steep_pp[512]:.3g} vs plain {steep_plain[512]:.3g}; "
                              f"c=0.5 worst pp/plain = {worst_flat:.2f}, {elapsed:.1f}s")
    for s in PP_GRID:
        if s >= 96:
            assert steep_pp[s] < steep_plain[s], s
        assert flat_pp[s] <= 3 * flat_plain[s], s
    assert elapsed < 300.0


@acceptance("AC10", "log-log slopes over s=32..512: plain in [-0.65, -0.35], Diag++ on c=1.5 <= -0.75")
def test_ac10_scaling(record_property):
    xs = np.array(SLOPE_GRID, dtype=float)
    slopes = {}
    for c in (0.5, 1.0, 1.5):
        plain = medians(f"powerlaw:1000,{c}", "rademacher", SLOPE_GRID, 10)
        slopes[f"plain c={c}"] = loglog_slope(xs, [plain[s] for s in SLOPE_GRID])
    pp = medians("powerlaw:1000,1.5", "diagpp", SLOPE_GRID, 10)
    slopes["diagpp c=1.5"] = loglog_slope(xs, [pp[s] for s in SLOPE_GRID])
    record_property("detail", ", ".join(f"{k}: {v:.3f}" for k, v in slopes.items()))
    for c in (0.5, 1.0, 1.5):
        assert -0.65 <= slopes[f"plain c={c}"] <= -0.35
    assert slopes["diagpp c=1.5"] <= -0.75


# --- AC11 ------------------------------------------------------------------


def factorized_matrices():
    for c in (0.5, 1.0, 1.5, 2.0):
        yield f"power law c={c}", generate_power_law_psd(PowerLawSpectrumSpec(300, c, seed=11))
    B = np.random.default_rng(4).standard_normal((200, 10))
    A = B @ B.T
    yield "rank-10", (A, eigen_factorize(A))
    C = np.random.default_rng(8).standard_normal((120, 120))
    A = C @ C.T + 0.1 * np.eye(120)
    yield "wishart", (A, eigen_factorize(A))


@acceptance("AC11", "structure identities on factorized matrices, < 10 s")
def test_ac11_structure_identities(record_property):
    start = time.perf_counter()
    worst_hadamard = 0.0
    for label, (A, eig) in factorized_matrices():
        consts = matrix_constants(A, eig)
        lam = eig.lam
        diag = np.diag(A)
        # Hadamard identity, recomputed independently of the package
        resid = np.linalg.norm((eig.V * eig.V) @ lam - diag) / np.linalg.norm(diag)
        worst_hadamard = max(worst_hadamard, resid)
        assert resid <= 1e-8, label
        assert consts.hadamard_residual <= 1e-8, label
        # PSD row bound
        row_sq = np.sum(A * A, axis=1)
        assert np.all(row_sq <= lam[0] * diag * (1 + 1e-10) + 1e-12), label
        assert consts.psd_row_bound, label
        # kappa_d <= kappa_2
        kappa2 = lam[0] / lam[-1] if lam[-1] > 1e-12 * lam[0] else math.inf
        kappa_d = lam[0] / np.min(diag[diag > 0])
        assert kappa_d <= kappa2 * (1 + 1e-12), label
        assert consts.kappa_d <= consts.kappa2 * (1 + 1e-12), label
        # best rank-r residual against tr(A)/sqrt(r), both from the spectrum and from A itself
        trace = float(np.sum(lam))
        tails = best_rank_r_residuals(lam)
        for r in range(1, len(lam) + 1):
            assert tails[r] <= trace / math.sqrt(r) * (1 + 1e-12), (label, r)
        for r in (1, 5, 10):
            Ar = (eig.V[:, :r] * lam[:r]) @ eig.V[:, :r].T
            assert np.linalg.norm(A - Ar) <= np.trace(A) / math.sqrt(r) * (1 + 1e-10), (label, r)
    elapsed = time.perf_counter() - start
    record_property("detail", f"worst Hadamard residual {worst_hadamard:.1e}, {elapsed:.2f}s")
    assert elapsed < 10.0


# --- AC12 ------------------------------------------------------------------


def _msc10480_path():
    candidates = [os.environ.get("MSC10480_PATH", "")]
    here = Path(__file__).resolve().parent
    candidates += [str(here / "data" / "msc10480.mtx"), str(here.parent / "data" / "msc10480.mtx")]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


@acceptance("AC12", "msc10480 row ratios at rows 1, 10, 1000 (needs the Matrix Market file)")
def test_ac12_msc10480_row_ratios(record_property):
    path = _msc10480_path()
    if path is None:
        pytest.skip("msc10480.mtx not found; set MSC10480_PATH or place it in data/msc10480.mtx")
    op = load_matrix_market(path)
    assert op.n == 10480
    consts = matrix_constants(op.matrix)
    expected = {1: 0.3868, 10: 0.0125, 1000: 4.7154}
    got = {row: consts.row_ratio(row - 1) for row in expected}
    record_property("detail", ", ".join(f"row {k}: {v:.4f}" for k, v in got.items()))
    for row, value in expected.items():
        assert abs(got[row] - value) <= 1e-3, row
