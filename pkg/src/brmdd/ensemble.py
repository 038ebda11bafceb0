"""Band random matrices with a disordered leading diagonal.

Basis states are labelled ``k = -K, ..., K``; matrix row ``i`` holds state
``k = i - K`` so the probing state ``|0>`` sits in the middle row.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnsembleParams:
    """One ensemble of band matrices.

    Attributes
    ----------
    K : int
        Half size, the matrix dimension is ``N = 2K + 1``.
    b : int
        Band half width, couplings live on ``0 < |m - k| <= b``.
    v : float
        Root mean square of the off-diagonal couplings.
    delta : float
        Mean spacing of the unperturbed levels.
    master_seed : int
        Seed from which every realization is derived.
    n_realizations : int
        Number of disorder realizations.
    """

    K: int
    b: int
    v: float
    delta: float = 1.0
    master_seed: int = 0
    n_realizations: int = 100

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if int(self.b) != self.b or not 1 <= self.b <= 2 * self.K:
            raise ValueError(f"band b must be an integer in [1, 2K={2 * self.K}], got {self.b}")
        if not math.isfinite(self.v) or self.v < 0:
            raise ValueError(f"coupling v must be finite and >= 0, got {self.v}")
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise ValueError(f"level spacing delta must be > 0, got {self.delta}")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if self.b > self.K:
            warnings.warn(
                f"relative band width b/K = {self.b / self.K:.3g} exceeds 1",
                stacklevel=3,
            )

    @classmethod
    def from_dimensionless(cls, q, beta, K, delta=1.0, **kwargs) -> "EnsembleParams":
        """Build parameters from the coupling ``q`` and relative band ``beta``.

        ``b`` is rounded to the nearest integer; ``v`` is then computed from
        the realized ``b / K`` so that the requested ``q`` is exact.
        """
        b = int(round(beta * K))
        if b < 1:
            raise ValueError(f"beta={beta} with K={K} gives an empty band")
        beta_eff = b / K
        delta_c = delta / beta_eff
        v = q * delta_c * math.sqrt(beta_eff)
        return cls(K=K, b=b, v=v, delta=delta, **kwargs)

    @property
    def N(self) -> int:
        return 2 * self.K + 1

    @property
    def beta(self) -> float:
        return self.b / self.K

    @property
    def delta_c(self) -> float:
        return self.delta / self.beta

    @property
    def q(self) -> float:
        return self.v / (self.delta_c * math.sqrt(self.beta))

    @property
    def coupling_bound(self) -> float:
        """Half width ``V`` of the uniform coupling law, ``v**2 = V**2 / 3``."""
        return self.v * math.sqrt(3.0)


def derived_params(p: EnsembleParams) -> tuple[float, float, float]:
    """Return ``(beta, delta_c, q)`` for an ensemble."""
    return p.beta, p.delta_c, p.q


@dataclass(frozen=True)
class BrmddMatrix:
    entries: np.ndarray
    K: int
    b: int

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def band(self) -> int:
        return self.b

    @property
    def probe_row(self) -> int:
        return self.K

    def element(self, m: int, k: int) -> float:
        """Matrix element indexed by basis labels ``-K..K``."""
        return float(self.entries[m + self.K, k + self.K])


def realization_rng(master_seed: int, realization_index: int) -> np.random.Generator:
    # spawn_key makes the stream a pure function of (seed, index)
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(realization_index,))
    return np.random.Generator(np.random.PCG64(seq))


def build_matrix(p: EnsembleParams, realization_index: int) -> BrmddMatrix:
    """Draw realization ``realization_index`` of the ensemble ``p``.

    Diagonal levels are i.i.d. uniform on ``[-K delta, K delta]`` kept in
    index order, with the probe level pinned at exactly 0. Couplings inside
    the band are i.i.d. uniform on ``[-V, V]``.
    """
    if int(realization_index) != realization_index or not 0 <= realization_index < p.n_realizations:
        raise IndexError(
            f"realization_index {realization_index} outside [0, {p.n_realizations})"
        )
    rng = realization_rng(p.master_seed, int(realization_index))
    n, K = p.N, p.K
    H = np.zeros((n, n))
    diag = rng.uniform(-K * p.delta, K * p.delta, size=n)
    diag[K] = 0.0
    H[np.diag_indices(n)] = diag

    V = p.coupling_bound
    rows = np.arange(n)
    for d in range(1, min(p.b, n - 1) + 1):
        vals = rng.uniform(-V, V, size=n - d)
        H[rows[: n - d], rows[d:]] = vals
        H[rows[d:], rows[: n - d]] = vals
    return BrmddMatrix(entries=H, K=K, b=p.b)


def check_matrix(m: BrmddMatrix, delta: float = 1.0) -> None:
    """Raise ``ValueError`` unless ``m`` satisfies the structural invariants."""
    H = m.entries
    if not np.array_equal(H, H.T):
        raise ValueError("matrix is not exactly symmetric")
    i, j = np.indices(H.shape)
    if np.any(H[np.abs(i - j) > m.b] != 0.0):
        raise ValueError("nonzero entry outside the band")
    diag = np.diag(H)
    bound = m.K * delta
    if np.any(np.abs(diag) > bound):
        raise ValueError("diagonal level outside [-K delta, K delta]")
    if diag[m.K] != 0.0:
        raise ValueError("probe level E_0 is not exactly zero")
