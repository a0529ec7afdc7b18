import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from distmetro.montecarlo import RunningMoments, chunk_sizes, merge_all, run_chunked
from distmetro.netcore import haar_column, haar_unitary
from distmetro.typicality import (
    LEVY_A,
    LEVY_C,
    TwoEigSpec,
    TypicalityError,
    cap_weight_pdf,
    chi_square_gof,
    concentration_bound,
    haar_moment_suite,
    histogram,
    jensen_bound,
    lipschitz_constant,
    max_gradient_norm,
    mean_prefactor,
    prefactor,
    prefactor_columns,
    prefactor_gradient,
    sample_prefactor,
    sphere_embedding,
    tail_frequency,
    two_eig_bin_probabilities,
    two_eig_pdf,
)


def beta_oracle_pdf(x, spec):
    # f = (g2 + dg t)^2 with t ~ Beta(k, M - k)
    r = np.sqrt(x)
    t = (r - spec.g2) / spec.dg
    return stats.beta(spec.k, spec.M - spec.k).pdf(t) / (2 * r * spec.dg)


def test_scalar_generator_gives_constant_prefactor():
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert prefactor(haar_unitary(4, rng), 2.5 * np.eye(4)) == pytest.approx(6.25)


def test_identity_picks_first_entry():
    assert prefactor(np.eye(2), np.diag([3.0, 1.0])) == 9.0


def test_prefactor_column_form():
    rng = np.random.default_rng(1)
    g = np.array([3.0, -1.0, 2.0, 0.5])
    V = haar_unitary(4, rng)
    G = V.conj().T @ np.diag(g) @ V
    U = haar_unitary(4, rng)
    u = (V @ U)[:, 0]
    assert prefactor(U, G) == pytest.approx(np.sum(np.abs(u) ** 2 * g) ** 2, rel=1e-12)
    assert prefactor_columns(U[:, 0][None, :], G)[0] == pytest.approx(prefactor(U, G), rel=1e-12)


def test_prefactor_rejects_mismatch_and_non_hermitian():
    with pytest.raises(TypicalityError):
        prefactor(np.eye(2), np.eye(3))
    with pytest.raises(TypicalityError):
        prefactor(np.eye(2), np.array([[1j, 0], [0, 0]]))


def test_mean_prefactor_examples():
    assert mean_prefactor(np.eye(5)) == pytest.approx(1.0)
    assert mean_prefactor([3.0] * 10 + [1.0] * 10) == pytest.approx(1700 / 420)
    assert mean_prefactor([3.0] * 10 + [1.0] * 10) == pytest.approx(4.047619047619048, rel=1e-12)
    assert mean_prefactor([3.0, 1.0]) == pytest.approx(26 / 6)


def test_jensen_examples():
    assert jensen_bound(np.eye(3)) == pytest.approx(1.0)
    assert jensen_bound([3.0, 1.0]) == pytest.approx(4.0)
    assert jensen_bound([3.0, 1.0]) <= mean_prefactor([3.0, 1.0])
    assert jensen_bound([1.0, -1.0]) == 0


def test_two_eig_spec_constant():
    spec = TwoEigSpec(3.0, 1.0, 1, 2)
    assert spec.C == pytest.approx(0.25)
    assert spec.dg == 2.0
    spec = TwoEigSpec(3.0, 1.0, 10, 20)
    from math import factorial

    expected = factorial(19) / (2 * 2.0**19 * factorial(9) * factorial(9))
    assert spec.C == pytest.approx(expected, rel=1e-12)
    with pytest.raises(TypicalityError):
        TwoEigSpec(1.0, 3.0, 1, 2)
    with pytest.raises(TypicalityError):
        TwoEigSpec(3.0, 1.0, 0, 2)
    with pytest.raises(TypicalityError):
        TwoEigSpec(3.0, 3.0, 1, 2).C


def test_two_eig_spec_from_spectrum():
    spec = TwoEigSpec.from_spectrum([1, 3, 1, 3, 3])
    assert (spec.g1, spec.g2, spec.k, spec.M) == (3, 1, 3, 5)


def test_two_eig_pdf_support_and_normalization():
    for k, M in ((1, 2), (3, 7), (10, 20), (100, 200)):
        spec = TwoEigSpec(3.0, 1.0, k, M)
        assert two_eig_pdf(0.5, spec) == 0
        assert two_eig_pdf(9.5, spec) == 0
        assert two_eig_bin_probabilities([1.0, 9.0], spec).sum() == pytest.approx(1.0, abs=1e-6)


def test_two_eig_pdf_matches_beta_oracle():
    for k, M in ((1, 2), (2, 5), (10, 20), (100, 200)):
        spec = TwoEigSpec(3.0, 1.0, k, M)
        x = np.linspace(1.01, 8.99, 57)
        np.testing.assert_allclose(two_eig_pdf(x, spec), beta_oracle_pdf(x, spec), rtol=1e-9, atol=1e-300)


def test_two_eig_pdf_zero_floor():
    spec = TwoEigSpec(2.0, 0.0, 1, 3)
    total, _ = integrate.quad(lambda s: two_eig_pdf(s * s, spec) * 2 * s, 0, 2)
    assert total == pytest.approx(1.0, abs=1e-9)
    assert two_eig_bin_probabilities([0.0, 4.0], spec)[0] == pytest.approx(1.0, abs=1e-6)


def test_cap_weight_examples():
    t = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(cap_weight_pdf(t, 1, 2), 1.0)
    for k, M in ((1, 2), (3, 8), (10, 20)):
        mean, _ = integrate.quad(lambda s: s * cap_weight_pdf(s, k, M), 0, 1)
        assert mean == pytest.approx(k / M, abs=1e-9)
    with pytest.raises(TypicalityError):
        cap_weight_pdf(0.5, 0, 3)


def test_cap_weight_monte_carlo():
    u = haar_column(20, np.random.default_rng(2), size=100_000)
    w = np.sum(np.abs(u[:, :10]) ** 2, axis=1)
    cdf = lambda x: np.array([integrate.quad(lambda s: cap_weight_pdf(s, 10, 20), 0, xi)[0] for xi in np.atleast_1d(x)])
    res = stats.kstest(w[:2000], cdf)
    assert res.pvalue > 0.01
    # full sample against the equivalent Beta law
    assert stats.kstest(w, stats.beta(10, 10).cdf).pvalue > 0.01


def test_concentration_bound_values():
    assert concentration_bound(1.0, 200, 3.0) == pytest.approx(1.997789183429999, rel=1e-12)
    assert LEVY_A == pytest.approx(1 / (72 * np.pi**3))
    # A = 2M / (C (4 |G|^2)^2) per unit M |G|^-4 with C = 9 pi^3
    assert LEVY_A == pytest.approx(2 / (LEVY_C * 16))
    with pytest.raises(TypicalityError):
        concentration_bound(0.0, 10, 1.0)


@settings(max_examples=50, deadline=None)
@given(eps=st.floats(0.01, 100), M=st.integers(1, 10_000), g=st.floats(0.1, 10))
def test_concentration_bound_monotone(eps, M, g):
    b = concentration_bound(eps, M, g)
    assert concentration_bound(eps * 1.5, M, g) <= b
    assert concentration_bound(eps, M + 1, g) <= b


def test_gradient_matches_finite_difference():
    rng = np.random.default_rng(3)
    g = np.array([3.0, 1.0, -2.0])
    x = rng.normal(size=6)
    x /= np.linalg.norm(x)
    gt = np.repeat(g, 2)
    f = lambda y: np.sum(gt * y * y) ** 2
    h = 1e-6
    fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(6)])
    np.testing.assert_allclose(prefactor_gradient(x, g), fd, atol=1e-7)
    u = x[0::2] + 1j * x[1::2]
    np.testing.assert_allclose(sphere_embedding(u), x)
    assert prefactor_columns(u[None, :], g)[0] == pytest.approx(f(x))


def test_lipschitz_certificate():
    rng = np.random.default_rng(4)
    for g in ([3.0, 1.0], [3.0] * 10 + [1.0] * 10, [2.0, -1.5, 0.3, 1.0]):
        bound = lipschitz_constant(np.array(g))
        assert bound == pytest.approx(4 * max(abs(v) for v in g) ** 2)
        assert max_gradient_norm(g, 10_000, rng) <= bound + 1e-9


def test_sample_support_and_jensen():
    g = np.array([3.0, 3.0, 1.0, 1.0])
    s = sample_prefactor(g, 20_000, seed=5)
    assert s.samples.max() <= 9.0 + 1e-12
    assert s.samples.min() >= 1.0 - 1e-12
    assert s.mean_analytic >= s.jensen_bound
    assert s.opnorm == 3.0


def test_sample_mean_matches_closed_form():
    for M in (2, 5, 20):
        g = np.array([3.0] * (M // 2) + [1.0] * (M - M // 2))
        s = sample_prefactor(g, 100_000, seed=M)
        assert abs(s.mean_mc - s.mean_analytic) < 4 * s.stderr_mc


def test_full_unitary_route_matches_column_route():
    g = np.array([3.0, 3.0, 1.0, 1.0, 1.0])
    a = sample_prefactor(g, 20_000, seed=6).samples
    b = sample_prefactor(g, 20_000, seed=7, full_unitary=True).samples
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_unitary_invariance_of_distribution():
    g = np.array([3.0, 3.0, 1.0, 1.0])
    V = haar_unitary(4, np.random.default_rng(8))
    G = V @ np.diag(g) @ V.conj().T
    a = sample_prefactor(np.diag(g), 20_000, seed=9)
    b = sample_prefactor(G, 20_000, seed=10)
    assert abs(a.mean_mc - b.mean_mc) < 5 * np.hypot(a.stderr_mc, b.stderr_mc)
    assert stats.ks_2samp(a.samples, b.samples).pvalue > 1e-3


def test_thread_count_does_not_change_results():
    g = np.array([3.0, 1.0, 1.0])
    a = sample_prefactor(g, 50_000, seed=11, chunk=7_000, threads=1)
    b = sample_prefactor(g, 50_000, seed=11, chunk=7_000, threads=3)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.mean_mc == b.mean_mc and a.stderr_mc == b.stderr_mc


def test_chi_square_accepts_truth_and_rejects_mismatch():
    spec = TwoEigSpec(3.0, 1.0, 1, 2)
    s = sample_prefactor(spec.spectrum(), 100_000, seed=12)
    assert chi_square_gof(s.samples, spec).pvalue > 0.01
    wrong = sample_prefactor(TwoEigSpec(3.0, 1.0, 2, 4).spectrum(), 100_000, seed=13)
    assert chi_square_gof(wrong.samples, spec).pvalue < 1e-6


def test_histogram_is_density_normalized():
    spec = TwoEigSpec(3.0, 1.0, 10, 20)
    s = sample_prefactor(spec.spectrum(), 20_000, seed=14)
    edges, dens = histogram(s.samples, spec)
    assert len(edges) == 51
    assert np.sum(dens * np.diff(edges)) == pytest.approx(1.0)


def test_tail_frequency_below_bound():
    for M in (2, 20, 200):
        g = np.array([3.0] * (M // 2) + [1.0] * (M - M // 2))
        s = sample_prefactor(g, 20_000, seed=M + 1)
        for eps in (0.25, 0.5, 1.0, 2.0, 4.0):
            assert tail_frequency(s.samples, s.mean_analytic, eps) <= concentration_bound(eps, M, 3.0)


def test_concentration_trend():
    stds = []
    for M in (2, 20, 200):
        g = np.array([3.0] * (M // 2) + [1.0] * (M - M // 2))
        stds.append(sample_prefactor(g, 20_000, seed=M).std_mc)
    assert stds[0] > stds[1] > stds[2]


def test_moment_suite_trivial_dimension():
    suite = haar_moment_suite(1, 10_000, seed=1)
    assert suite.passed
    assert all(r.z == 0 for r in suite.rows)


def test_moment_suite_small_run():
    suite = haar_moment_suite(3, 100_000, seed=2)
    assert suite.passed
    assert suite.row("E|U11|^2").exact == pytest.approx(1 / 3)
    assert suite.row("E[U11 U22 conj(U12) conj(U21)]").exact == pytest.approx(-1 / 24)
    assert abs(suite.row("Re E(U^+AU)_12").z) <= 4


def test_moment_suite_requires_samples():
    with pytest.raises(TypicalityError):
        haar_moment_suite(4, 100, seed=0)


def test_running_moments_merge():
    rng = np.random.default_rng(15)
    x = rng.normal(size=1003)
    parts = [RunningMoments.from_samples(x[a:b]) for a, b in ((0, 10), (10, 500), (500, 1003))]
    m = merge_all(parts)
    assert m.count == 1003
    assert m.mean == pytest.approx(x.mean(), rel=1e-12)
    assert m.variance == pytest.approx(x.var(ddof=1), rel=1e-12)


def test_chunking():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    out = run_chunked(lambda n, rng: n, seed=0, total=10, chunk=3)
    assert out == [3, 3, 3, 1]
