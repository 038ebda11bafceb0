"""Closed-form reference curves and regime classification.

Everything here is deterministic and works on scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

PERTURBATIVE = "perturbative"
LOCALIZED_NONERGODIC = "localized_nonergodic"
LOCALIZED_ERGODIC = "localized_ergodic"
REGIMES = (PERTURBATIVE, LOCALIZED_NONERGODIC, LOCALIZED_ERGODIC)


@dataclass(frozen=True)
class LawConstants:
    """Coefficients of the empirical scaling laws.

    ``L1, L2`` shape the ergodic localization length, ``D1, D2`` the ergodic
    participation ratio, ``C`` the exponential rise of the non-ergodic
    participation ratio and ``C0`` the localization border.
    """

    L1: float = 2.01
    L2: float = 3.16
    D1: float = 3.16
    D2: float = 1.94
    C: float = 3.15
    C0: float = math.pi

    def __post_init__(self):
        for name in ("L1", "L2", "D1", "D2", "C", "C0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_CONSTANTS = LawConstants()


@dataclass(frozen=True)
class RegimeLabel:
    label: str
    coupling: float  # v / delta_c = q sqrt(beta)
    localization_threshold: float
    ergodicity_threshold: float

    def __str__(self):
        return self.label


def breit_wigner(E, gamma):
    """Lorentzian ``(gamma / 2 pi) / (E**2 + gamma**2 / 4)`` with FWHM ``gamma``."""
    if not np.all(np.asarray(gamma) > 0):
        raise ValueError("gamma must be positive")
    E = np.asarray(E, dtype=float)
    return gamma / (2 * np.pi) / (E * E + gamma * gamma / 4)


def xi_e_law(q, c: LawConstants = DEFAULT_CONSTANTS):
    q = np.asarray(q, dtype=float)
    return c.L1 * q * np.sqrt(1 + (c.L2 * q) ** 2)


def golden_rule_gamma(v, delta_c):
    """Golden-rule width ``2 pi v**2 / delta_c``."""
    if not np.all(np.asarray(delta_c) > 0):
        raise ValueError("delta_c must be positive")
    return 2 * np.pi * np.asarray(v, dtype=float) ** 2 / delta_c


def small_q_gamma(v, beta):
    """Two-state estimate ``2 beta v`` of the width at weak coupling."""
    if not np.all(np.asarray(beta) > 0):
        raise ValueError("beta must be positive")
    return 2 * np.asarray(beta, dtype=float) * np.asarray(v, dtype=float)


def two_state_overlap(coupling, e_n):
    """Weight of the probe in an eigenstate at ``e_n`` mixed by ``coupling``."""
    V2 = np.asarray(coupling, dtype=float) ** 2
    e_n = np.asarray(e_n, dtype=float)
    with np.errstate(invalid="ignore"):
        out = V2 / (V2 + e_n * e_n)
    # V = E = 0 is the uncoupled probe itself
    return np.where((V2 == 0) & (e_n == 0), 1.0, out)


def ipr_ergodic_law(q, c: LawConstants = DEFAULT_CONSTANTS):
    q = np.asarray(q, dtype=float)
    return 1 + c.D1 * q * np.sqrt(1 + (c.D2 * q) ** 2)


def ipr_nonergodic_law(q, beta, c: LawConstants = DEFAULT_CONSTANTS):
    if not np.all(np.asarray(beta) > 0):
        raise ValueError("beta must be positive")
    return np.exp(c.C * np.asarray(q, dtype=float) * np.sqrt(beta))


def ergodicity_threshold(q, c: LawConstants = DEFAULT_CONSTANTS) -> float:
    """Smallest ``q sqrt(beta)`` that counts as ergodic at this ``q``.

    Where ``2 pi q**2 <= 1`` the logarithm has no meaning and the threshold
    falls back to the localization border; elsewhere it is never below it.
    """
    loc = 1 / c.C0
    g = 2 * math.pi * q * q
    if g <= 1:
        return loc
    return max(loc, math.log(g) / c.C)


def classify_regime(q: float, beta: float, c: LawConstants = DEFAULT_CONSTANTS) -> RegimeLabel:
    if q < 0:
        raise ValueError("q must be non-negative")
    if not 0 < beta <= 2:
        raise ValueError("beta must lie in (0, 2]")
    x = q * math.sqrt(beta)
    loc = 1 / c.C0
    erg = ergodicity_threshold(q, c)
    # equality falls to the less chaotic side
    if x <= loc:
        label = PERTURBATIVE
    elif x > erg:
        label = LOCALIZED_ERGODIC
    else:
        label = LOCALIZED_NONERGODIC
    return RegimeLabel(label, x, loc, erg)


def localization_border_beta(q, c: LawConstants = DEFAULT_CONSTANTS):
    """``beta`` on the localization border for each ``q``."""
    q = np.asarray(q, dtype=float)
    return 1.0 / (c.C0 * q) ** 2


def ergodicity_border_beta(q, c: LawConstants = DEFAULT_CONSTANTS):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.array([(ergodicity_threshold(x, c) / x) ** 2 for x in q])
    return out if out.size > 1 else out[0]


def xi_e_unity_q(c: LawConstants = DEFAULT_CONSTANTS) -> float:
    """The ``q`` at which the ergodic localization length equals 1."""
    return brentq(lambda q: float(xi_e_law(q, c)) - 1.0, 1e-6, 10.0, xtol=1e-14)


def reference_spacing_pdf(S, which: str):
    S = np.asarray(S, dtype=float)
    if which == "poisson":
        return np.exp(-S)
    if which == "wigner_dyson":
        return 0.5 * np.pi * S * np.exp(-0.25 * np.pi * S * S)
    raise ValueError(f"unknown spacing reference {which!r}")


def reference_spacing_cdf(S, which: str):
    S = np.clip(np.asarray(S, dtype=float), 0, None)
    if which == "poisson":
        return -np.expm1(-S)
    if which == "wigner_dyson":
        return -np.expm1(-0.25 * np.pi * S * S)
    raise ValueError(f"unknown spacing reference {which!r}")
