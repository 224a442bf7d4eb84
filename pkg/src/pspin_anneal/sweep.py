"""The (eta x t_f) residual-energy sweep, the gap-scan export and the sweep plot."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .bath import BathParams, QuadratureError
from .config import SweepConfig, ensure_writable
from .dicke import ModelParams, Schedule
from .lindblad import EvolutionConfig, EvolutionError, LindbladGenerator, evolve
from .spectral import GapScan, SpectralError, scan_minimal_gap

log = logging.getLogger(__name__)

CSV_HEADER = (
    "N", "p", "Gamma", "eta", "beta", "omega_c", "tf", "residual_energy", "ground_population",
    "trace_error", "min_eigenvalue", "steps", "status",
)
GAP_HEADER = ("s", "gap", "e0", "e1")

# failures that a single grid point may raise without aborting the sweep
RUN_ERRORS = (EvolutionError, SpectralError, QuadratureError, FloatingPointError, np.linalg.LinAlgError, ValueError)


def fmt(x: float) -> str:
    """12 significant digits."""
    return f"{x:.12g}"


@dataclass(frozen=True)
class SweepRow:
    eta: float
    tf: float
    residual_energy: float = math.nan
    ground_population: float = math.nan
    trace_error: float = math.nan
    min_eigenvalue: float = math.nan
    steps: int = 0
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def csv_fields(self, model: ModelParams, beta: float, omega_c: float) -> list:
        return [
            str(model.N), str(model.p), fmt(model.Gamma), fmt(self.eta), fmt(beta), fmt(omega_c), fmt(self.tf),
            fmt(self.residual_energy), fmt(self.ground_population), fmt(self.trace_error),
            fmt(self.min_eigenvalue), str(self.steps), self.status,
        ]


@dataclass
class SweepResult:
    rows: list
    provenance: dict
    csv_path: Optional[Path] = None
    plot_path: Optional[Path] = None

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]

    def lookup(self, eta: float, tf: float) -> SweepRow:
        for r in self.rows:
            if r.eta == eta and r.tf == tf:
                return r
        raise KeyError((eta, tf))


def run_point(model: ModelParams, schedule: Schedule, bath: BathParams, evolution: EvolutionConfig) -> SweepRow:
    """One grid point; failures become a row with status ``failed:<Error>``."""
    try:
        res = evolve(model, schedule, bath, evolution)
    except RUN_ERRORS as exc:
        log.error("run eta=%g tf=%g failed: %s", bath.eta, evolution.t_f, exc)
        return SweepRow(bath.eta, evolution.t_f, status=f"failed:{type(exc).__name__}", message=str(exc))
    return SweepRow(
        eta=bath.eta,
        tf=evolution.t_f,
        residual_energy=res.residual_energy,
        ground_population=res.ground_population,
        trace_error=res.max_trace_error,
        min_eigenvalue=res.min_eigenvalue,
        steps=res.steps,
    )


def _point_task(args):
    return run_point(*args)


def _provenance(config: SweepConfig) -> dict:
    return {
        "program": "pspin_anneal sweep",
        "version": __version__,
        "config_file": config.source,
        "config": config.echo(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_preamble(fh, provenance: dict):
    # comment lines ahead of the header; the timestamp sits alone on the last one
    fh.write(f"# {provenance['program']} {provenance['version']}\n")
    fh.write(f"# config_file: {provenance['config_file']}\n")
    fh.write(f"# config: {json.dumps(provenance['config'], sort_keys=True)}\n")
    fh.write(f"# timestamp: {provenance['timestamp']}\n")


def read_sweep_csv(path) -> list:
    """Rows of a sweep CSV as dicts, skipping the ``#`` provenance block."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def run_sweep(config: SweepConfig, out_dir: Optional[Path] = None, jobs: Optional[int] = None,
              lamb_shift: Optional[bool] = None, plot: bool = True) -> SweepResult:
    """Run every (eta, t_f) grid point and write ``sweep.csv`` (and ``sweep.svg``).

    Rows are appended and flushed as runs complete, so an interrupted sweep
    keeps its finished rows.  With one job the rows follow the grid order
    (eta outer, t_f inner); with more they follow completion order.

    Args:
        config: validated sweep configuration.
        out_dir, jobs, lamb_shift: overrides of the corresponding config entries.
        plot: also write ``sweep.svg``.
    """
    out_dir = Path(out_dir) if out_dir is not None else config.out_dir
    jobs = config.jobs if jobs is None else int(jobs)
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    evolution = config.evolution
    if lamb_shift is not None:
        evolution = dataclasses.replace(evolution, lamb_shift=bool(lamb_shift))
        config = dataclasses.replace(config, evolution=evolution)
    ensure_writable(out_dir)

    tasks = [
        (config.model, config.schedule, BathParams(eta, config.beta, config.omega_c), config.evolution_for(tf))
        for eta in config.eta_values
        for tf in config.tf_values
    ]
    open_etas = [eta for eta in config.eta_values if eta > 0]
    if evolution.lamb_shift and open_etas:
        # build (or load) the shared Lamb-shift table once, before any worker needs it
        LindbladGenerator(config.model, config.schedule, BathParams(open_etas[0], config.beta, config.omega_c),
                          config.evolution_for(1.0))

    provenance = _provenance(config)
    csv_path = out_dir / "sweep.csv"
    rows = []
    with open(csv_path, "w", newline="") as fh:
        _write_preamble(fh, provenance)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        fh.flush()

        def record(row: SweepRow):
            rows.append(row)
            writer.writerow(row.csv_fields(config.model, config.beta, config.omega_c))
            fh.flush()
            log.info("eta=%g tf=%g: %s eps=%s", row.eta, row.tf, row.status, fmt(row.residual_energy))

        if jobs == 1:
            for task in tasks:
                record(run_point(*task))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_point_task, task) for task in tasks]
                for fut in as_completed(futures):
                    record(fut.result())

    result = SweepResult(rows, provenance, csv_path=csv_path)
    if plot:
        result.plot_path = emit_plot(rows, out_dir / "sweep.svg", config.eta_values)
    return result


def emit_plot(rows: Iterable[SweepRow], path, eta_values: Optional[Sequence[float]] = None) -> Optional[Path]:
    """Residual energy against t_f on a log axis, one series per eta.

    Rows with t_f = 0 cannot sit on a log axis: they are skipped from the plot
    (they remain in the CSV) and a note is added.  Failed rows are skipped.

    Returns:
        The written path, or ``None`` (with a warning) when no row is plottable.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in rows if r.ok]
    plottable = [r for r in rows if r.tf > 0]
    if not plottable:
        warnings.warn("no successful rows with t_f > 0; plot not written", RuntimeWarning, stacklevel=2)
        return None
    if eta_values is None:
        eta_values = sorted({r.eta for r in plottable})
    path = Path(path)
    positive = all(r.residual_energy > 0 for r in plottable)

    with matplotlib.rc_context({"svg.hashsalt": "pspin-anneal", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.6))
        for eta in eta_values:
            series = sorted((r for r in plottable if r.eta == eta), key=lambda r: r.tf)
            if not series:
                continue
            ax.plot([r.tf for r in series], [r.residual_energy for r in series], marker="o", ms=4,
                    label=f"η = {eta:g}")
        ax.set_xscale("log")
        if positive:
            ax.set_yscale("log")
        ax.set_xlabel(r"$t_f$ [$1/E$]")
        ax.set_ylabel(r"residual energy $\epsilon$ [$E$]")
        ax.legend(frameon=False)
        if any(r.tf == 0 for r in rows):
            ax.text(0.01, 0.01, r"$t_f = 0$ rows omitted (see CSV)", transform=ax.transAxes, fontsize=8,
                    ha="left", va="bottom", color="0.4")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def gap_scan_command(config: SweepConfig, resolution: Optional[int] = None, out_dir: Optional[Path] = None) -> tuple:
    """Scan the gap of H(s), write ``gaps.csv`` and return ``(GapScan, csv path)``."""
    out_dir = Path(out_dir) if out_dir is not None else config.out_dir
    resolution = config.gap_resolution if resolution is None else int(resolution)
    ensure_writable(out_dir)
    scan: GapScan = scan_minimal_gap(config.model, config.schedule, resolution)
    path = out_dir / "gaps.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GAP_HEADER)
        for s, gap, e0, e1 in zip(scan.grid, scan.gap, scan.e0, scan.e1):
            writer.writerow([fmt(s), fmt(gap), fmt(e0), fmt(e1)])
    return scan, path
