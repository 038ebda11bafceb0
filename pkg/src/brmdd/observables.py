"""Per-realization and disorder-averaged observables of the probing state."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .spectral import SpectralDecomposition
from .theory import reference_spacing_cdf

MIN_POPULATED_BINS = 8


class InsufficientDataError(ValueError):
    """The data cannot support the requested estimate."""


@dataclass(frozen=True)
class OverlapSpectrum:
    """Eigenenergies ``E_n`` with the probe weights ``W_n0 = |<alpha_n|0>|**2``."""

    energies: np.ndarray
    weights: np.ndarray


def overlaps(d: SpectralDecomposition, probe_row: int | None = None) -> OverlapSpectrum:
    """Probe weights in each eigenstate; the probe defaults to the middle row."""
    if probe_row is None:
        probe_row = (d.size - 1) // 2
    # squared unit-vector components can overshoot 1 by an ulp
    W = np.minimum(d.eigenvectors[probe_row] ** 2, 1.0)
    return OverlapSpectrum(energies=d.eigenvalues, weights=W)


def ipr(samples: Sequence[OverlapSpectrum]) -> float:
    """Participation ratio ``1 / <sum_n W_n0**2>`` (average first, then invert)."""
    if len(samples) == 0:
        raise InsufficientDataError("ipr needs at least one realization")
    return 1.0 / float(np.mean([np.sum(s.weights**2) for s in samples]))


def ipr_from_sums(sum_w2: Sequence[float]) -> float:
    if len(sum_w2) == 0:
        raise InsufficientDataError("ipr needs at least one realization")
    return 1.0 / float(np.mean(sum_w2))


def eigenvector_ipr(d: SpectralDecomposition, block: int = 512) -> float:
    """Mean over eigenstates of ``(sum_k |<k|alpha_n>|**4)**-1``."""
    Q = d.eigenvectors
    p4 = np.empty(Q.shape[1])
    for start in range(0, Q.shape[1], block):
        cols = Q[:, start : start + block]
        sq = cols * cols
        p4[start : start + block] = np.einsum("ij,ij->j", sq, sq)
    return float(np.mean(1.0 / p4))


@dataclass
class LsdEstimate:
    """Binned local spectral density.

    ``counts_weighted`` and ``counts_raw`` are the per-realization averages of
    the summed probe weight and of the number of eigenvalues in each bin.
    Bins without any eigenvalue carry ``nan`` in ``rho_w``.
    """

    bin_edges: np.ndarray
    rho_w: np.ndarray
    counts_weighted: np.ndarray
    counts_raw: np.ndarray
    n_realizations_used: int
    rho_e: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def populated(self) -> np.ndarray:
        return self.counts_raw > 0

    @property
    def half_width(self) -> float:
        return float(self.bin_edges[-1])

    def integral(self) -> float:
        ok = self.populated
        return float(np.sum(self.rho_w[ok] * self.widths[ok]))


@dataclass
class LsdAccumulator:
    """Running sums for the two histograms behind the local spectral density.

    Realizations are added one by one; two accumulators over disjoint
    realization sets can be merged.
    """

    bin_edges: np.ndarray
    weighted: np.ndarray = field(init=False)
    raw: np.ndarray = field(init=False)
    n: int = field(init=False, default=0)

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        nb = self.bin_edges.size - 1
        self.weighted = np.zeros(nb)
        self.raw = np.zeros(nb)

    @classmethod
    def symmetric(cls, half_width: float, n_bins: int) -> "LsdAccumulator":
        if not half_width > 0:
            raise ValueError("window half width must be positive")
        if n_bins < MIN_POPULATED_BINS:
            raise ValueError(f"need at least {MIN_POPULATED_BINS} bins")
        return cls(np.linspace(-half_width, half_width, n_bins + 1))

    def add(self, s: OverlapSpectrum) -> None:
        self.weighted += np.histogram(s.energies, self.bin_edges, weights=s.weights)[0]
        self.raw += np.histogram(s.energies, self.bin_edges)[0]
        self.n += 1

    def merge(self, other: "LsdAccumulator") -> "LsdAccumulator":
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge histograms with different bins")
        out = LsdAccumulator(self.bin_edges)
        out.weighted = self.weighted + other.weighted
        out.raw = self.raw + other.raw
        out.n = self.n + other.n
        return out

    def estimate(self, rho_e: float) -> LsdEstimate:
        if self.n == 0:
            raise InsufficientDataError("no realizations accumulated")
        num = self.weighted / self.n
        den = self.raw / self.n
        rho = np.full(num.shape, np.nan)
        ok = self.raw > 0
        # ratio of the two disorder averages, not the average of ratios
        rho[ok] = rho_e * num[ok] / den[ok]
        return LsdEstimate(self.bin_edges.copy(), rho, num, den, self.n, rho_e)


def lsd_histogram(
    samples: Iterable[OverlapSpectrum],
    window_half_width: float,
    n_bins: int = 41,
    rho_e: float = 1.0,
) -> LsdEstimate:
    """Disorder-averaged local spectral density on ``[-w, w]``.

    Raises ``InsufficientDataError`` when fewer than 8 bins hold an
    eigenvalue.
    """
    acc = LsdAccumulator.symmetric(window_half_width, n_bins)
    for s in samples:
        acc.add(s)
    h = acc.estimate(rho_e)
    if np.count_nonzero(h.populated) < MIN_POPULATED_BINS:
        raise InsufficientDataError(
            f"only {np.count_nonzero(h.populated)} populated bins in window +-{window_half_width:g}"
        )
    return h


@dataclass(frozen=True)
class SpacingSample:
    spacings: np.ndarray
    window_fraction: float
    normalization: str = "mean"

    def __len__(self):
        return self.spacings.size


def level_spacings(d, window_fraction: float = 0.5) -> SpacingSample:
    """Nearest-neighbour spacings from the central part of the spectrum.

    ``d`` may be a decomposition or a plain array of eigenvalues. The
    spacings are divided by their own mean.
    """
    E = d.eigenvalues if isinstance(d, SpectralDecomposition) else np.asarray(d, dtype=float)
    E = np.sort(E)
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must lie in (0, 1]")
    n_keep = int(round(E.size * window_fraction))
    if n_keep < 16:
        raise ValueError(f"window keeps {n_keep} levels, need at least 16")
    start = (E.size - n_keep) // 2
    s = np.diff(E[start : start + n_keep])
    mean = s.mean()
    if not mean > 0:
        raise InsufficientDataError("degenerate spectrum: all levels coincide")
    return SpacingSample(s / mean, window_fraction)


def pool_spacings(samples: Sequence[SpacingSample]) -> SpacingSample:
    if not samples:
        raise InsufficientDataError("no spacing samples to pool")
    return SpacingSample(
        np.concatenate([s.spacings for s in samples]), samples[0].window_fraction
    )


def spacing_distance(s, reference: str) -> float:
    """Kolmogorov-Smirnov distance to the Poisson or Wigner-Dyson law."""
    x = s.spacings if isinstance(s, SpacingSample) else np.asarray(s, dtype=float)
    if x.size < 16:
        raise InsufficientDataError("need at least 16 spacings")
    return float(stats.kstest(x, lambda S: reference_spacing_cdf(S, reference)).statistic)


def spacing_histogram(s: SpacingSample, n_bins: int = 40, s_max: float = 4.0):
    """Normalized ``P(S)`` histogram; returns ``(centers, density)``."""
    edges = np.linspace(0.0, s_max, n_bins + 1)
    counts = np.histogram(s.spacings, edges)[0]
    density = counts / (s.spacings.size * np.diff(edges))
    return 0.5 * (edges[1:] + edges[:-1]), density
