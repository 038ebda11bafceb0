import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brmdd import theory as th
from brmdd.fitting import (
    FitError,
    fit_ergodic_ipr_law,
    fit_exponential_rate,
    fit_lorentzian,
    fit_lsd,
    fit_xi_e_law,
    nonergodic_restriction,
)
from brmdd.observables import LsdAccumulator, LsdEstimate, OverlapSpectrum


def exact_histogram(gamma, half_width, n_bins=41, amplitude=1.0, noise=0.0, seed=0):
    """A noiseless (or log-normally jittered) Lorentzian on bin centres."""
    edges = LsdAccumulator.symmetric(half_width, n_bins).bin_edges
    c = 0.5 * (edges[:-1] + edges[1:])
    rho = amplitude * th.breit_wigner(c, gamma)
    if noise:
        rho = rho * np.exp(np.random.default_rng(seed).normal(scale=noise, size=rho.size))
    counts = np.ones(n_bins)
    return LsdEstimate(edges, rho, rho * counts, counts, n_realizations_used=1, rho_e=1.0)


@pytest.mark.parametrize("gamma", [1e-3, 0.04, 1.0, 37.0])
def test_lorentzian_exact_recovery(gamma):
    fit = fit_lorentzian(exact_histogram(gamma, 5 * gamma, amplitude=0.9), gamma0=gamma * 3)
    assert fit.gamma == pytest.approx(gamma, rel=1e-6)
    assert fit.amplitude == pytest.approx(0.9, rel=1e-6)
    assert fit.residual_rms < 1e-8


@settings(max_examples=25, deadline=None)
@given(gamma=st.floats(0.05, 20.0), start=st.floats(0.3, 3.0), seed=st.integers(0, 1000))
def test_lorentzian_noisy_recovery(gamma, start, seed):
    fit = fit_lorentzian(exact_histogram(gamma, 5 * gamma, noise=0.02, seed=seed), gamma0=gamma * start)
    assert fit.gamma == pytest.approx(gamma, rel=0.05)


def test_lorentzian_needs_bins():
    h = exact_histogram(1.0, 5.0, n_bins=9)
    h.rho_w[:3] = np.nan
    with pytest.raises(FitError):
        fit_lorentzian(h)


def synthetic(gamma, n_real=300, L=None, rho_e=50.0, seed=0):
    L = 30 * gamma if L is None else L
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_real):
        E = rng.uniform(-L, L, size=int(2 * L * rho_e))
        out.append(OverlapSpectrum(E, th.breit_wigner(E, gamma) / rho_e))
    return out


@pytest.mark.parametrize("start", [0.2, 1.0, 5.0])
def test_window_iteration_converges(start):
    gamma = 1.5
    fit, h = fit_lsd(synthetic(gamma), gamma0=gamma * start, rho_e=50.0)
    assert fit.gamma == pytest.approx(gamma, rel=0.02)
    assert fit.xi_e == pytest.approx(gamma * 50.0, rel=0.02)
    assert 1 <= fit.iterations <= 5
    assert h.half_width == pytest.approx(5 * fit.gamma, rel=0.06)


def test_window_iteration_failure_keeps_last():
    with pytest.raises(FitError) as info:
        fit_lsd(synthetic(1.5), gamma0=9.0, rho_e=50.0, max_iter=1)
    fit, h = info.value.last
    assert fit is not None and h is not None


def test_delta_like_input_rejected():
    with pytest.raises(FitError):
        fit_lsd(synthetic(1.0, n_real=2), gamma0=0.0)


# ---------------------------------------------------------------- scaling laws


def test_xi_e_law_exact_recovery():
    q = np.geomspace(0.01, 10, 12)
    pts = list(zip(q, th.xi_e_law(q)))
    f = fit_xi_e_law(pts)
    assert f["L1"] == pytest.approx(2.01, rel=1e-6)
    assert f["L2"] == pytest.approx(3.16, rel=1e-6)
    assert f.n_points == 12


def test_xi_e_law_noisy_recovery_and_errors():
    rng = np.random.default_rng(4)
    q = np.geomspace(0.01, 10, 24)
    xi = th.xi_e_law(q) * np.exp(rng.normal(scale=0.03, size=q.size))
    f = fit_xi_e_law(zip(q, xi))
    assert abs(f["L1"] - 2.01) < 3 * f.stderr["L1"] + 1e-3
    assert abs(f["L2"] - 3.16) < 3 * f.stderr["L2"] + 1e-3
    assert 0 < f.stderr["L1"] < 0.1


def test_xi_e_law_needs_decades_and_points():
    q = np.linspace(1.0, 5.0, 10)
    with pytest.raises(FitError, match="decades"):
        fit_xi_e_law(zip(q, th.xi_e_law(q)))
    q = np.array([0.01, 1.0, 10.0])
    with pytest.raises(FitError, match="points"):
        fit_xi_e_law(zip(q, th.xi_e_law(q)))


def test_ergodic_law_exact_recovery():
    q = np.geomspace(0.05, 10, 10)
    f = fit_ergodic_ipr_law(zip(q, th.ipr_ergodic_law(q)))
    assert f["D1"] == pytest.approx(3.16, rel=1e-6)
    assert f["D2"] == pytest.approx(1.94, rel=1e-6)


def test_ergodic_law_unidentifiable():
    with pytest.raises(FitError, match="two distinct"):
        fit_ergodic_ipr_law([(0.0, 1.0)] * 3 + [(1.0, 7.9)] * 3)


def test_exponential_rate_exact():
    x = np.linspace(0.2, 1.2, 7)
    f = fit_exponential_rate(zip(x, np.exp(3.15 * x)))
    assert f["C"] == pytest.approx(3.15, rel=1e-12)
    assert f.stderr["C"] < 1e-12


def test_exponential_rate_restriction():
    x = np.linspace(0.2, 1.2, 8)
    xi_ipr = np.exp(3.0 * x)
    xi_e = np.where(x < 0.9, 10 * xi_ipr, xi_ipr)  # last points not nonergodic
    pts = [(a, b, c) for a, b, c in zip(x, xi_ipr, xi_e)]
    f = fit_exponential_rate(pts, nonergodic_restriction(2.7))
    assert f.n_points == int(np.sum(x < 0.9))
    assert f.restriction == "xi_ipr < xi_e/2.7"
    with pytest.raises(FitError, match="5 points"):
        fit_exponential_rate(pts[:4])


def test_bin_count_invariance():
    from brmdd.observables import lsd_histogram

    samples = synthetic(2.0, n_real=200)
    g41 = fit_lorentzian(lsd_histogram(samples, 10.0, 41, rho_e=50.0)).gamma
    g81 = fit_lorentzian(lsd_histogram(samples, 10.0, 81, rho_e=50.0)).gamma
    assert g81 == pytest.approx(g41, rel=0.1)


def test_residuals_vanish_only_for_exact_model():
    exact = fit_lorentzian(exact_histogram(1.0, 5.0), gamma0=2.0)
    noisy = fit_lorentzian(exact_histogram(1.0, 5.0, noise=0.05), gamma0=2.0)
    assert exact.residual_rms < 1e-8
    assert noisy.residual_rms > 0.01
