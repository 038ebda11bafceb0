"""Least-squares estimates of the Lorentzian width and of the scaling-law constants.

All residuals are taken in log space since the data span decades.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .observables import InsufficientDataError, LsdEstimate, OverlapSpectrum, lsd_histogram
from .theory import breit_wigner

XTOL = 1e-8
MAX_ITER = 200


class FitError(RuntimeError):
    """A fit could not be carried out or did not converge."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class LorentzianFit:
    gamma: float
    amplitude: float
    residual_rms: float
    n_bins_used: int
    rho_e: float
    iterations: int = 1

    @property
    def xi_e(self) -> float:
        return self.gamma * self.rho_e

    def model(self, E):
        return self.amplitude * breit_wigner(E, self.gamma)

    def log_residuals(self, h: LsdEstimate, max_abs_energy: float | None = None) -> np.ndarray:
        """``log rho_w - log model`` on the usable bins, optionally only ``|E| <= max_abs_energy``."""
        x, y = _usable(h)
        if max_abs_energy is not None:
            keep = np.abs(x) <= max_abs_energy
            x, y = x[keep], y[keep]
        return y - np.log(self.model(x))


@dataclass(frozen=True)
class LawFit:
    """Fitted constants of one scaling law."""

    law: str
    params: dict
    stderr: dict
    n_points: int
    restriction: str = "none"
    residual_rms: float = float("nan")
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]


def _usable(h: LsdEstimate):
    ok = h.populated & (h.rho_w > 0)
    return h.centers[ok], np.log(h.rho_w[ok])


def fit_lorentzian(h: LsdEstimate, rho_e: float | None = None, gamma0: float | None = None) -> LorentzianFit:
    """Fit ``A * rho_BW(E; gamma)`` to a binned density in log space.

    The amplitude is free so that mass cut off by the finite window does not
    bias the width.
    """
    rho_e = h.rho_e if rho_e is None else rho_e
    x, y = _usable(h)
    if x.size < 8:
        raise FitError(f"only {x.size} usable bins, need 8")
    if gamma0 is None or not gamma0 > 0:
        gamma0 = h.half_width / 5
    g0 = math.log(gamma0)
    a0 = float(np.mean(y - np.log(breit_wigner(x, gamma0))))
    x2 = x * x

    def resid(p):
        g = math.exp(p[0])
        return y - p[1] - p[0] + math.log(2 * math.pi) + np.log(x2 + g * g / 4)

    def jac(p):
        g2 = math.exp(2 * p[0])
        J = np.empty((x.size, 2))
        J[:, 0] = -1.0 + (g2 / 2) / (x2 + g2 / 4)
        J[:, 1] = -1.0
        return J

    res = least_squares(resid, [g0, a0], jac=jac, method="lm", xtol=XTOL, ftol=1e-12,
                        max_nfev=MAX_ITER)
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(f"Lorentzian fit did not converge: {res.message}")
    return LorentzianFit(
        gamma=math.exp(res.x[0]),
        amplitude=math.exp(res.x[1]),
        residual_rms=float(np.sqrt(np.mean(res.fun**2))),
        n_bins_used=int(x.size),
        rho_e=rho_e,
    )


def fit_lsd(
    samples: Sequence[OverlapSpectrum],
    gamma0: float,
    rho_e: float = 1.0,
    n_bins: int = 41,
    window_factor: float = 5.0,
    rtol: float = 0.05,
    max_iter: int = 5,
) -> tuple[LorentzianFit, LsdEstimate]:
    """Histogram the samples on ``+-window_factor * gamma`` and refit until stable.

    Starts from ``gamma0`` and stops once the width changes by less than
    ``rtol``. Raises ``FitError`` after ``max_iter`` rounds without settling;
    the last fit is attached as ``err.last``.
    """
    if not gamma0 > 0:
        raise FitError("initial width must be positive (delta-like density)")
    gamma = gamma0
    fit = h = None
    for it in range(1, max_iter + 1):
        try:
            h = lsd_histogram(samples, window_factor * gamma, n_bins, rho_e)
        except InsufficientDataError as exc:
            raise FitError(str(exc), last=(fit, h)) from exc
        fit = fit_lorentzian(h, rho_e, gamma0=gamma)
        change = abs(fit.gamma - gamma) / gamma
        gamma = fit.gamma
        if change < rtol:
            return _with_iterations(fit, it), h
    raise FitError(
        f"width did not settle within {max_iter} window updates (last {gamma:.4g})",
        last=(_with_iterations(fit, max_iter), h),
    )


def _with_iterations(fit: LorentzianFit, it: int) -> LorentzianFit:
    return LorentzianFit(fit.gamma, fit.amplitude, fit.residual_rms, fit.n_bins_used, fit.rho_e, it)


def _as_arrays(points, ncols=2):
    arr = np.asarray(list(points), dtype=float)
    if arr.ndim != 2 or arr.shape[1] < ncols:
        raise FitError(f"expected a list of {ncols}-tuples")
    return arr.T


def _log_params_fit(law, names, log_model, x, y, p0, restriction="none"):
    """Fit positive parameters through their logarithms; errors via the delta method."""
    k = len(names)
    if x.size < 2 * k:
        raise FitError(f"{law}: {x.size} points for {k} parameters, need {2 * k}")

    def resid(u):
        return np.log(y) - log_model(x, np.exp(u))

    res = least_squares(resid, np.log(p0), method="lm", xtol=XTOL, ftol=1e-15,
                        gtol=1e-15, max_nfev=MAX_ITER * (k + 1))
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(f"{law}: fit did not converge: {res.message}")
    p = np.exp(res.x)
    dof = x.size - k
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov_u = s2 * np.linalg.inv(res.jac.T @ res.jac)
        se = p * np.sqrt(np.clip(np.diag(cov_u), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(k, np.inf)
    return LawFit(
        law=law,
        params=dict(zip(names, map(float, p))),
        stderr=dict(zip(names, map(float, se))),
        n_points=int(x.size),
        restriction=restriction,
        residual_rms=float(np.sqrt(np.mean(res.fun**2))),
    )


def fit_xi_e_law(points: Iterable[tuple[float, float]], min_decades: float = 2.0) -> LawFit:
    """Fit ``xi_e = L1 q sqrt(1 + (L2 q)**2)`` to ``(q, xi_e)`` points."""
    q, xi = _as_arrays(points)
    keep = (q > 0) & (xi > 0) & np.isfinite(xi)
    q, xi = q[keep], xi[keep]
    if q.size < 2 or math.log10(q.max() / q.min()) < min_decades - 1e-9:
        raise FitError(f"xi_e law needs q spanning {min_decades:g} decades")
    i_lo, i_hi = np.argmin(q), np.argmax(q)
    L1 = xi[i_lo] / q[i_lo]
    L2 = max(math.sqrt(max(xi[i_hi] / (L1 * q[i_hi]), 1.0) ** 2 - 1) / q[i_hi], 1e-3)

    def model(q, p):
        return np.log(p[0] * q) + 0.5 * np.log1p((p[1] * q) ** 2)

    return _log_params_fit("xi_e", ("L1", "L2"), model, q, xi, [L1, L2])


def fit_ergodic_ipr_law(points: Iterable[tuple[float, float]]) -> LawFit:
    """Fit ``xi_ipr = 1 + D1 q sqrt(1 + (D2 q)**2)`` to ``(q, xi_ipr)`` points."""
    q, xi = _as_arrays(points)
    keep = (q >= 0) & (xi > 0) & np.isfinite(xi)
    q, xi = q[keep], xi[keep]
    pos = q > 0
    if np.unique(q[pos]).size < 2:
        raise FitError("ergodic IPR law is unidentifiable without two distinct q > 0")
    lo, hi = np.argmin(np.where(pos, q, np.inf)), np.argmax(q)
    D1 = max((xi[lo] - 1) / q[lo], 1e-3)
    D2 = max(math.sqrt(max((xi[hi] - 1) / (D1 * q[hi]), 1.0) ** 2 - 1) / q[hi], 1e-3)

    def model(q, p):
        return np.log1p(p[0] * q * np.sqrt(1 + (p[1] * q) ** 2))

    return _log_params_fit("ergodic_ipr", ("D1", "D2"), model, q, xi, [D1, D2])


def nonergodic_restriction(ratio: float = 2.7) -> Callable[..., bool]:
    """Predicate ``xi_ipr < xi_e / ratio`` on ``(x, xi_ipr, xi_e)`` points."""

    def keep(x, xi_ipr, xi_e):
        return xi_ipr < xi_e / ratio

    keep.description = f"xi_ipr < xi_e/{ratio:g}"
    return keep


def fit_exponential_rate(points: Iterable[Sequence[float]], restriction: Callable[..., bool] | None = None) -> LawFit:
    """Slope ``C`` of ``ln xi_ipr = C x`` through the origin, ``x = q sqrt(beta)``.

    ``points`` are ``(x, xi_ipr)`` or ``(x, xi_ipr, xi_e)`` tuples; the
    optional ``restriction`` is called with each tuple unpacked.
    """
    pts = [tuple(p) for p in points]
    if restriction is not None:
        pts = [p for p in pts if restriction(*p)]
    desc = getattr(restriction, "description", "custom") if restriction else "none"
    if len(pts) < 5:
        raise FitError(f"exponential rate needs 5 points, got {len(pts)}")
    arr = np.asarray([p[:2] for p in pts], dtype=float)
    x, y = arr[:, 0], np.log(arr[:, 1])
    sxx = float(x @ x)
    if sxx == 0:
        raise FitError("all points at x = 0")
    C = float(x @ y) / sxx
    r = y - C * x
    se = math.sqrt(float(r @ r) / (x.size - 1) / sxx)
    return LawFit("exponential", {"C": C}, {"C": se}, int(x.size), desc,
                  float(np.sqrt(np.mean(r**2))))
