"""Full diagonalization of real symmetric matrices with checked contracts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ensemble import BrmddMatrix

ORTHO_TOL = 1e-10
RESIDUAL_TOL = 1e-9


class SpectralError(RuntimeError):
    """Raised when the eigensolver fails or its output breaks a contract."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues and matching orthonormal eigenvectors.

    ``eigenvectors[:, n]`` is the eigenvector of ``eigenvalues[n]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]


def _fix_signs(Q: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first component above tol is made positive
    nonzero = np.abs(Q) > tol
    first = np.argmax(nonzero, axis=0)
    signs = np.sign(Q[first, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def diagonalize(m, *, verify: bool = False, context: str | None = None) -> SpectralDecomposition:
    """Diagonalize a symmetric matrix.

    Parameters
    ----------
    m : BrmddMatrix or ndarray
        Real symmetric input.
    verify : bool
        Check orthonormality and reconstruction before returning. Costs two
        extra matrix products.
    context : str, optional
        Appended to error messages, e.g. the seed and realization index.
    """
    H = m.entries if isinstance(m, BrmddMatrix) else np.asarray(m, dtype=float)
    where = f" ({context})" if context else ""
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {H.shape}{where}")
    if not np.all(np.isfinite(H)):
        raise SpectralError(f"matrix has non-finite entries{where}")
    if not np.array_equal(H, H.T):
        raise SpectralError(f"matrix is not symmetric{where}")
    try:
        w, Q = scipy.linalg.eigh(H, driver="evd", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SpectralError(f"eigensolver did not converge{where}: {exc}") from exc
    d = SpectralDecomposition(eigenvalues=w, eigenvectors=_fix_signs(Q))
    if verify:
        verify_decomposition(H, d, context=context)
    return d


def decomposition_errors(H: np.ndarray, d: SpectralDecomposition) -> dict:
    """Orthonormality, reconstruction and trace errors of ``d`` against ``H``."""
    Q, w = d.eigenvectors, d.eigenvalues
    gram = Q.T @ Q
    gram[np.diag_indices_from(gram)] -= 1.0
    recon = (Q * w) @ Q.T
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    trace = float(np.trace(H))
    return {
        "orthonormality": float(np.max(np.abs(gram))),
        "residual": float(np.max(np.abs(H - recon))) / scale,
        "trace": abs(float(np.sum(w)) - trace) / max(1.0, abs(trace), float(np.sum(np.abs(w)))),
    }


def verify_decomposition(H, d: SpectralDecomposition, *, context: str | None = None) -> dict:
    H = H.entries if isinstance(H, BrmddMatrix) else np.asarray(H, dtype=float)
    where = f" ({context})" if context else ""
    if np.any(np.diff(d.eigenvalues) < 0):
        raise SpectralError(f"eigenvalues are not sorted{where}")
    errs = decomposition_errors(H, d)
    if errs["orthonormality"] > ORTHO_TOL:
        raise SpectralError(f"eigenvectors not orthonormal: {errs['orthonormality']:.3g}{where}")
    if errs["residual"] > RESIDUAL_TOL:
        raise SpectralError(f"reconstruction residual {errs['residual']:.3g}{where}")
    return errs
