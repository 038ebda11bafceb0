"""Disorder averaging over cells, parameter sweeps and result persistence.

Per-realization work may run in a process pool, but every reduction walks the
realizations in index order so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .ensemble import EnsembleParams, build_matrix, check_matrix
from .fitting import FitError, LorentzianFit, fit_lsd
from .observables import (
    LsdEstimate,
    OverlapSpectrum,
    SpacingSample,
    eigenvector_ipr,
    ipr_from_sums,
    level_spacings,
    overlaps,
    pool_spacings,
    spacing_distance,
    spacing_histogram,
)
from .spectral import diagonalize
from .theory import classify_regime, golden_rule_gamma, reference_spacing_pdf, small_q_gamma, xi_e_law

log = logging.getLogger(__name__)

DEFAULT_REALIZATIONS = 100
MAX_REALIZATIONS = 1000
DEFAULT_XI_RATIO = 0.1

INT_COLUMNS = ("K", "N", "b", "n_realizations", "master_seed", "n_bins", "fit_iterations", "n_spacings")
FLOAT_COLUMNS = (
    "v", "delta", "beta", "delta_c", "q",
    "gamma", "xi_e", "fit_amplitude", "fit_residual_rms",
    "xi_ipr", "eigvec_ipr", "ks_poisson", "ks_wigner_dyson",
)
COLUMNS = (
    "cell_key", "K", "N", "b", "v", "delta", "beta", "delta_c", "q",
    "n_realizations", "master_seed", "n_bins",
    "status", "fit_status",
    "gamma", "xi_e", "fit_amplitude", "fit_residual_rms", "fit_iterations",
    "xi_ipr", "eigvec_ipr", "ks_poisson", "ks_wigner_dyson", "n_spacings",
    "regime", "version",
)


class GuardError(ValueError):
    """A cell would leave the regime where finite-size effects are negligible."""


class HarnessIOError(OSError):
    pass


# ---------------------------------------------------------------------------
# cells


def check_guard(p: EnsembleParams, max_xi_ratio: float = DEFAULT_XI_RATIO) -> None:
    predicted = float(xi_e_law(p.q))
    if predicted > max_xi_ratio * p.N:
        raise GuardError(
            f"predicted xi_e={predicted:.4g} exceeds {max_xi_ratio:g}*N={max_xi_ratio * p.N:.4g}"
            f" (q={p.q:.4g}, N={p.N}); increase K"
        )


def choose_K(q: float, beta: float, min_K: int = 200, max_xi_ratio: float = DEFAULT_XI_RATIO) -> int:
    """Smallest ``K >= min_K`` meeting the finite-size guard with ``beta * K`` integral."""
    need = math.ceil((float(xi_e_law(q)) / max_xi_ratio - 1) / 2)
    K0 = max(min_K, need, 1)
    for K in range(K0, K0 + 100_000):
        b = beta * K
        if abs(b - round(b)) < 1e-9 * max(1.0, b) and round(b) >= 1:
            return K
    log.warning("no K near %d makes beta*K integral; rounding the band", K0)
    return K0


def cell_key(p: EnsembleParams, n_bins: int = 41, window_fraction: float = 0.5) -> str:
    payload = {
        "K": p.K, "b": p.b, "v": repr(float(p.v)), "delta": repr(float(p.delta)),
        "n_realizations": p.n_realizations, "master_seed": p.master_seed,
        "n_bins": n_bins, "window_fraction": repr(float(window_fraction)),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RealizationResult:
    energies: np.ndarray
    weights: np.ndarray
    sum_w2: float
    eigvec_ipr: float
    spacings: SpacingSample


def realize(p: EnsembleParams, index: int, window_fraction: float = 0.5,
            verify: bool = False) -> RealizationResult:
    """Build, diagonalize and measure one realization."""
    m = build_matrix(p, index)
    if verify:
        check_matrix(m, p.delta)
    d = diagonalize(m, verify=verify, context=f"master_seed={p.master_seed}, realization={index}")
    ov = overlaps(d, m.probe_row)
    return RealizationResult(
        energies=ov.energies,
        weights=ov.weights,
        sum_w2=float(np.sum(ov.weights**2)),
        eigvec_ipr=eigenvector_ipr(d),
        spacings=level_spacings(d, window_fraction),
    )


def _realize_task(args):
    return realize(*args)


@dataclass
class CellOutcome:
    record: dict
    params: EnsembleParams
    fit: LorentzianFit | None = None
    lsd: LsdEstimate | None = None
    spacings: SpacingSample | None = None
    samples: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0


def _base_record(p: EnsembleParams, n_bins: int, window_fraction: float) -> dict:
    rec = dict.fromkeys(COLUMNS, None)
    rec.update(
        cell_key=cell_key(p, n_bins, window_fraction), K=p.K, N=p.N, b=p.b, v=float(p.v),
        delta=float(p.delta), beta=p.beta, delta_c=p.delta_c, q=p.q,
        n_realizations=p.n_realizations, master_seed=p.master_seed, n_bins=n_bins,
        regime=classify_regime(p.q, p.beta).label if p.beta <= 2 else None,
        version=__version__,
    )
    return rec


def run_cell(
    p: EnsembleParams,
    workers: int = 1,
    n_bins: int = 41,
    window_fraction: float = 0.5,
    max_xi_ratio: float = DEFAULT_XI_RATIO,
    rho_e: float | None = None,
    verify_first: bool = True,
) -> CellOutcome:
    """Run every realization of one ensemble and reduce the observables.

    Raises ``GuardError`` before any work if the cell violates the
    finite-size guard.
    """
    check_guard(p, max_xi_ratio)
    t0 = time.perf_counter()
    rho_e = 1.0 / p.delta if rho_e is None else rho_e
    tasks = [(p, i, window_fraction, verify_first and i == 0) for i in range(p.n_realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (4 * workers))
            results = list(pool.map(_realize_task, tasks, chunksize=chunk))
    else:
        results = [_realize_task(t) for t in tasks]

    samples = [OverlapSpectrum(r.energies, r.weights) for r in results]
    spacings = pool_spacings([r.spacings for r in results])
    rec = _base_record(p, n_bins, window_fraction)
    rec.update(
        status="ok",
        xi_ipr=ipr_from_sums(np.array([r.sum_w2 for r in results])),
        eigvec_ipr=float(np.mean([r.eigvec_ipr for r in results])),
        ks_poisson=spacing_distance(spacings, "poisson"),
        ks_wigner_dyson=spacing_distance(spacings, "wigner_dyson"),
        n_spacings=len(spacings),
    )

    gamma0 = max(float(golden_rule_gamma(p.v, p.delta_c)), float(small_q_gamma(p.v, p.beta)))
    fit = lsd = None
    if gamma0 <= 0:
        rec["fit_status"] = "rejected: delta-like density"
    else:
        try:
            fit, lsd = fit_lsd(samples, gamma0, rho_e=rho_e, n_bins=n_bins)
            rec.update(
                fit_status="ok", gamma=fit.gamma, xi_e=fit.xi_e, fit_amplitude=fit.amplitude,
                fit_residual_rms=fit.residual_rms, fit_iterations=fit.iterations,
            )
        except FitError as exc:
            rec["fit_status"] = f"failed: {exc}"
            if exc.last is not None:
                fit, lsd = exc.last
    return CellOutcome(rec, p, fit, lsd, spacings, samples, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# persistence


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value) if math.isfinite(value) else ""
    return str(value)


def parse_value(column: str, text: str):
    if text == "":
        return None
    if column in INT_COLUMNS:
        return int(text)
    if column in FLOAT_COLUMNS:
        return float(text)
    return text


def format_row(record: dict) -> dict:
    return {c: format_value(record.get(c)) for c in COLUMNS}


def _csv_text(rows: Sequence[dict], columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_results(path, raw: bool = False) -> list[dict]:
    """Read a results table; rows cut short by an interrupted write are dropped."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if None in row or any(row.get(c) is None for c in COLUMNS):
                continue
            rows.append(row if raw else {c: parse_value(c, row[c]) for c in COLUMNS})
    return rows


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def write_lsd_csv(path, outcome: CellOutcome) -> None:
    h, fit = outcome.lsd, outcome.fit
    cols = ("E", "rho_w", "rho_bw_fit", "counts_weighted", "counts_raw")
    rows = []
    for i, E in enumerate(h.centers):
        rows.append({
            "E": format_value(E),
            "rho_w": format_value(h.rho_w[i]),
            "rho_bw_fit": format_value(fit.model(E)) if fit else "",
            "counts_weighted": format_value(h.counts_weighted[i]),
            "counts_raw": format_value(h.counts_raw[i]),
        })
    _atomic_write(Path(path), _csv_text(rows, cols))


def write_spacing_csv(path, s: SpacingSample, n_bins: int = 40, s_max: float = 4.0) -> None:
    centers, density = spacing_histogram(s, n_bins, s_max)
    cols = ("S", "P", "poisson", "wigner_dyson")
    rows = [
        {"S": format_value(x), "P": format_value(y),
         "poisson": format_value(reference_spacing_pdf(x, "poisson")),
         "wigner_dyson": format_value(reference_spacing_pdf(x, "wigner_dyson"))}
        for x, y in zip(centers, density)
    ]
    _atomic_write(Path(path), _csv_text(rows, cols))


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    cells: list[EnsembleParams]
    master_seed: int = 0
    output_dir: str = "results"
    n_bins: int = 41
    window_fraction: float = 0.5
    max_xi_ratio: float = DEFAULT_XI_RATIO
    write_cell_files: bool = False
    source: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, output_dir: str | None = None) -> "SweepSpec":
        seed = int(data.get("master_seed", 0))
        cells = [cell_from_dict(c, seed) for c in data.get("cells", [])]
        return cls(
            cells=cells,
            master_seed=seed,
            output_dir=output_dir or data.get("output_dir", "results"),
            n_bins=int(data.get("n_bins", 41)),
            window_fraction=float(data.get("window_fraction", 0.5)),
            max_xi_ratio=float(data.get("max_xi_ratio", DEFAULT_XI_RATIO)),
            write_cell_files=bool(data.get("write_cell_files", False)),
            source=data,
        )

    @classmethod
    def load(cls, path, output_dir: str | None = None) -> "SweepSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), output_dir)


def cell_from_dict(c: dict, master_seed: int) -> EnsembleParams:
    """Accepts ``{q, beta, K}`` or ``{v, b, K, delta}``, plus ``realizations``."""
    n = int(c.get("realizations", DEFAULT_REALIZATIONS))
    if not 1 <= n <= MAX_REALIZATIONS:
        raise ValueError(f"realizations must lie in [1, {MAX_REALIZATIONS}], got {n}")
    delta = float(c.get("delta", 1.0))
    seed = int(c.get("master_seed", master_seed))
    if "q" in c:
        q, beta = float(c["q"]), float(c["beta"])
        K = int(c["K"]) if "K" in c else choose_K(q, beta)
        return EnsembleParams.from_dimensionless(q, beta, K, delta, master_seed=seed, n_realizations=n)
    missing = {"v", "b", "K"} - set(c)
    if missing:
        raise ValueError(f"cell needs q/beta or v/b/K; missing {sorted(missing)}")
    return EnsembleParams(K=int(c["K"]), b=int(c["b"]), v=float(c["v"]), delta=delta,
                          master_seed=seed, n_realizations=n)


@dataclass
class SweepReport:
    records: list[dict]
    computed: list[str]
    skipped: list[str]

    @property
    def n_failed(self) -> int:
        return sum(r["status"] != "ok" for r in self.records)


def _rejected_record(p, spec, reason, status="rejected"):
    rec = _base_record(p, spec.n_bins, spec.window_fraction)
    rec["status"] = status
    rec["fit_status"] = reason
    return rec


def run_sweep(
    spec: SweepSpec,
    workers: int = 1,
    on_cell: Callable[[dict], None] | None = None,
) -> SweepReport:
    """Run every cell of ``spec``, appending each finished row to ``results.csv``.

    Cells whose key already appears in the table are skipped, so an
    interrupted sweep resumes where it stopped. On completion the table is
    rewritten in spec order. ``on_cell`` is called after each computed cell.
    """
    out = Path(spec.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HarnessIOError(f"cannot create output directory {out}: {exc}") from exc
    results_path = out / "results.csv"
    manifest_path = out / "manifest.json"

    done: dict[str, dict] = {}
    if results_path.exists():
        for row in read_results(results_path, raw=True):
            done[row["cell_key"]] = row
        # drop any torn trailing line before appending
        _atomic_write(results_path, _csv_text(list(done.values())))

    manifest = _load_manifest(manifest_path)
    manifest.update(
        software_version=__version__,
        master_seed=spec.master_seed,
        spec=spec.source or {"cells": [asdict(c) for c in spec.cells]},
        settings={
            "n_bins": spec.n_bins, "lsd_window": "+-5 gamma", "fit_residuals": "log",
            "spacing_window_fraction": spec.window_fraction,
            "spacing_normalization": "mean (no unfolding)",
            "rho_e": "1/delta", "max_xi_ratio": spec.max_xi_ratio,
            "realization_seed": "SeedSequence(master_seed, spawn_key=(index,)) -> PCG64",
        },
        started=manifest.get("started") or _now(),
        finished=None,
    )
    manifest.setdefault("wall_time", {})
    _write_manifest(manifest_path, manifest)

    order: list[str] = []
    computed, skipped = [], []
    new_file = not results_path.exists()
    try:
        fh = results_path.open("a", newline="")
    except OSError as exc:
        raise HarnessIOError(f"cannot open {results_path}: {exc}") from exc
    with fh:
        writer = csv.DictWriter(fh, fieldnames=list(COLUMNS), lineterminator="\n")
        if new_file:
            writer.writeheader()
        for p in spec.cells:
            key = cell_key(p, spec.n_bins, spec.window_fraction)
            if key in order:
                continue
            order.append(key)
            if key in done:
                skipped.append(key)
                continue
            outcome = None
            try:
                outcome = run_cell(p, workers, spec.n_bins, spec.window_fraction, spec.max_xi_ratio)
                rec = outcome.record
            except GuardError as exc:
                rec = _rejected_record(p, spec, str(exc))
            except Exception as exc:  # one bad cell must not stop the sweep
                log.exception("cell %s failed", key)
                rec = _rejected_record(p, spec, f"{type(exc).__name__}: {exc}", status="failed")
            row = format_row(rec)
            writer.writerow(row)
            fh.flush()
            os.fsync(fh.fileno())
            done[key] = row
            computed.append(key)
            if outcome is not None:
                manifest["wall_time"][key] = round(outcome.wall_time, 3)
                if spec.write_cell_files:
                    if outcome.lsd is not None:
                        write_lsd_csv(out / f"lsd_{key}.csv", outcome)
                    write_spacing_csv(out / f"spacing_{key}.csv", outcome.spacings)
            _write_manifest(manifest_path, manifest)
            log.info("cell %s q=%.4g beta=%.4g -> %s", key, p.q, p.beta, rec["status"])
            if on_cell is not None:
                on_cell(rec)

    rows = [done[k] for k in order]
    _atomic_write(results_path, _csv_text(rows))
    manifest["finished"] = _now()
    manifest["cells"] = order
    _write_manifest(manifest_path, manifest)
    records = [{c: parse_value(c, r[c]) for c in COLUMNS} for r in rows]
    return SweepReport(records, computed, skipped)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_manifest(path: Path) -> dict:
    if path.exists():
        try:
            return json.loads(path.read_text())
        except (OSError, ValueError):
            log.warning("ignoring unreadable manifest %s", path)
    return {}


def _write_manifest(path: Path, manifest: dict) -> None:
    try:
        _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise HarnessIOError(f"cannot write {path}: {exc}") from exc
