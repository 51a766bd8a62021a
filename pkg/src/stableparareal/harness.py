"""Experiment driver: reference runs, error and energy diagnostics, CSV output and the CLI."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import parareal
from .config import (
    PRESETS,
    ExperimentConfig,
    build_run,
    fine_spec,
    initial_state,
    parse_config,
    preset,
    schedule_of,
)
from .manifold import hamiltonian
from .parareal import IterationTrace, _nan_like
from .propagators import ConfigurationError, DivergenceError, WaveState, advance
from .spectral import SpectralField, l2_norm_sq

log = logging.getLogger(__name__)

DIVERGED = "diverged"
ZERO_REFERENCE = "zero_reference"
REFERENCE_DIVERGED = "reference_diverged"

ERRORS_HEADER = ("iteration", "window", "time", "rel_error", "flag")
ENERGY_HEADER = ("iteration", "window", "time", "H", "rel_deviation")
LAMBDA_HEADER = ("iteration", "window", "group", "lambda")


# -- stored traces ----------------------------------------------------------------

@dataclass
class StoredTrace:
    """States and divergence flags reloaded from disk."""

    states: list
    diverged: np.ndarray
    times: np.ndarray

    @property
    def n_iterations(self) -> int:
        return len(self.states) - 1


def _stack(state) -> np.ndarray:
    if isinstance(state, WaveState):
        return np.stack([state.u.coeffs, state.v.coeffs])
    return state.coeffs[None, :]


def _unstack(arr: np.ndarray, period: float):
    if arr.shape[0] == 2:
        return WaveState(SpectralField(period, arr[0]), SpectralField(period, arr[1]))
    return SpectralField(period, arr[0])


def save_states(path: Path, rows: Sequence[Sequence], diverged: np.ndarray, times: np.ndarray) -> None:
    period = rows[0][0].period
    arr = np.array([[_stack(s) for s in row] for row in rows])
    np.savez(path, states=arr, diverged=diverged, times=times, period=period)


def load_states(path: Path) -> StoredTrace:
    with np.load(path) as z:
        period = float(z["period"])
        rows = [[_unstack(a, period) for a in row] for row in z["states"]]
        return StoredTrace(rows, z["diverged"].astype(bool), z["times"])


def load_trace_dir(directory) -> StoredTrace:
    """``trace.npz`` of a run directory, or a reference directory read as a single iterate."""
    d = Path(directory)
    if (d / "trace.npz").exists():
        return load_states(d / "trace.npz")
    if (d / "reference.npz").exists():
        return load_states(d / "reference.npz")
    raise FileNotFoundError(f"no trace.npz or reference.npz in {d}")


def load_reference_dir(directory) -> StoredTrace:
    d = Path(directory)
    if not (d / "reference.npz").exists():
        raise FileNotFoundError(f"no reference.npz in {d}")
    return load_states(d / "reference.npz")


# -- reference ----------------------------------------------------------------------

def reference_snapshots(cfg: ExperimentConfig, fine_dt: Optional[float] = None) -> list:
    """Fine sequential snapshots at window times; windows past a divergence hold NaN."""
    sched = schedule_of(cfg)
    spec = fine_spec(cfg, fine_dt)
    out = [initial_state(cfg)]
    for n in range(sched.n_windows):
        prev = out[-1]
        if prev.is_finite():
            try:
                nxt = advance(prev, *sched.bounds(n), spec)
            except DivergenceError:
                nxt = _nan_like(prev)
            if not nxt.is_finite():
                log.warning("fine reference diverged in window %d", n)
                nxt = _nan_like(prev)
        else:
            nxt = prev
        out.append(nxt)
    return out


def self_refinement_error(cfg: ExperimentConfig, reference: Optional[list] = None, factor: int = 10) -> float:
    """Max relative distance between the fine reference and a run with ``fine_dt / factor``."""
    ref = reference if reference is not None else reference_snapshots(cfg)
    finer = reference_snapshots(cfg, cfg.time.fine_dt / factor)
    return max(_rel(a, b)[0] for a, b in zip(ref[1:], finer[1:]))


# -- error report ----------------------------------------------------------------------

def phase_norm_sq(state) -> float:
    if isinstance(state, WaveState):
        return l2_norm_sq(state.u) + l2_norm_sq(state.v)
    return l2_norm_sq(state)


def _rel(state, ref) -> tuple[float, str]:
    ref_sq = phase_norm_sq(ref)
    if not np.isfinite(ref_sq):
        return float("nan"), REFERENCE_DIVERGED
    if not state.is_finite():
        return float("nan"), DIVERGED
    with np.errstate(over="ignore", invalid="ignore"):
        diff = np.sqrt(phase_norm_sq(state - ref))
    if ref_sq == 0.0:
        return float(diff), ZERO_REFERENCE
    return float(diff / np.sqrt(ref_sq)), ""


@dataclass
class ErrorReport:
    """``errors[k, n]`` relative phase-space error against the fine reference.

    Entries that could not be measured are NaN with a nonempty ``flags[k, n]``;
    a zero reference yields the absolute error flagged ``zero_reference``.
    """

    errors: np.ndarray
    flags: np.ndarray
    times: np.ndarray
    energy: Optional[np.ndarray] = None
    energy_deviation: Optional[np.ndarray] = None

    @property
    def n_iterations(self) -> int:
        return self.errors.shape[0] - 1

    def max_error(self, k: int) -> float:
        """Max over windows of the measurable errors of iterate ``k``; ``inf`` if any diverged."""
        if np.any(self.flags[k] == DIVERGED):
            return float("inf")
        row = self.errors[k][np.isfinite(self.errors[k])]
        return float(row.max()) if row.size else float("nan")

    def diverged(self, k: Optional[int] = None) -> bool:
        f = self.flags if k is None else self.flags[k]
        return bool(np.any(f == DIVERGED))


def relative_error(trace, reference: Sequence) -> ErrorReport:
    times = np.asarray(trace.times)
    if len(reference) != times.size:
        raise ConfigurationError(f"reference has {len(reference)} snapshots, trace has {times.size} windows")
    if reference[0].max_mode != trace.states[0][0].max_mode:
        raise ConfigurationError("reference and trace resolutions differ")
    K = len(trace.states) - 1
    errors = np.zeros((K + 1, times.size))
    flags = np.full((K + 1, times.size), "", dtype=object)
    for k, row in enumerate(trace.states):
        for n, (s, r) in enumerate(zip(row, reference)):
            errors[k, n], flags[k, n] = _rel(s, r)
            if trace.diverged[k, n] and not flags[k, n]:
                errors[k, n], flags[k, n] = float("nan"), DIVERGED
    return ErrorReport(errors, flags, times)


def energy_report(trace, y0, c: float) -> tuple[np.ndarray, np.ndarray]:
    """``H(u_n^k)`` and ``|H(u_n^k) - H(y0)| / H(y0)``; wave problems only."""
    if not isinstance(y0, WaveState):
        raise ConfigurationError("energy diagnostics are defined for the wave problem only")
    h0 = hamiltonian(y0, c)
    with np.errstate(over="ignore", invalid="ignore"):
        H = np.array([[hamiltonian(s, c) if s.is_finite() else np.nan for s in row] for row in trace.states])
        dev = np.abs(H - h0) / h0
    return H, dev


# -- output -------------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_csv(report: ErrorReport, trace, directory, config: Optional[ExperimentConfig] = None) -> list[Path]:
    """Write errors.csv, energy.csv (wave), lambda.csv (projected) and run.json."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {d}: {exc.strerror}") from exc
    written = []
    t = report.times
    rows = [(k, n, _fmt(t[n]), _fmt(report.errors[k, n]), report.flags[k, n])
            for k in range(report.errors.shape[0]) for n in range(t.size)]
    _write_rows(d / "errors.csv", ERRORS_HEADER, rows)
    written.append(d / "errors.csv")
    if report.energy is not None:
        rows = [(k, n, _fmt(t[n]), _fmt(report.energy[k, n]), _fmt(report.energy_deviation[k, n]))
                for k in range(report.energy.shape[0]) for n in range(t.size)]
        _write_rows(d / "energy.csv", ENERGY_HEADER, rows)
        written.append(d / "energy.csv")
    lambdas = getattr(trace, "lambdas", None)
    if lambdas is not None and trace.run.variant != "plain":
        rows = [(k, n, i, _fmt(lam)) for (k, n), lams in sorted(lambdas.items())
                for i, lam in enumerate(lams, start=1)]
        _write_rows(d / "lambda.csv", LAMBDA_HEADER, rows)
        written.append(d / "lambda.csv")
    if config is not None:
        (d / "run.json").write_text(config.to_json() + "\n")
        written.append(d / "run.json")
    return written


def read_errors_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the errors.csv writer: ``(errors, flags)`` arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != ERRORS_HEADER:
        raise ValueError(f"unexpected header {rows[0]}")
    body = rows[1:]
    K = max(int(r[0]) for r in body) + 1
    N = max(int(r[1]) for r in body) + 1
    errors = np.zeros((K, N))
    flags = np.full((K, N), "", dtype=object)
    for k, n, _, e, f in body:
        errors[int(k), int(n)] = float(e)
        flags[int(k), int(n)] = f
    return errors, flags


# -- experiment -------------------------------------------------------------------------------

@dataclass
class Experiment:
    config: ExperimentConfig
    trace: IterationTrace
    reference: list
    report: ErrorReport


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                   reference: Optional[list] = None) -> Experiment:
    pr = build_run(cfg)
    trace = parareal.run(pr, workers=cfg.workers if workers is None else workers)
    ref = reference if reference is not None else reference_snapshots(cfg)
    report = relative_error(trace, ref)
    if pr.is_wave:
        report.energy, report.energy_deviation = energy_report(trace, pr.initial, cfg.problem.c)
    if report.diverged():
        first = int(np.argmax(np.any(report.flags == DIVERGED, axis=1)))
        log.warning("parareal iterate %d diverged; see flags in errors.csv", first)
    return Experiment(cfg, trace, ref, report)


def write_experiment(exp: Experiment, directory) -> list[Path]:
    d = Path(directory)
    files = emit_csv(exp.report, exp.trace, d, exp.config)
    save_states(d / "trace.npz", exp.trace.states, exp.trace.diverged, exp.trace.times)
    save_states(d / "reference.npz", [exp.reference], np.zeros((1, len(exp.reference)), dtype=bool),
                exp.trace.times)
    return files + [d / "trace.npz", d / "reference.npz"]


def _summary(report: ErrorReport) -> str:
    lines = []
    for k in range(report.errors.shape[0]):
        tag = "  (diverged windows)" if report.diverged(k) else ""
        lines.append(f"k={k:3d}  max rel error {report.max_error(k):.3e}{tag}")
    return "\n".join(lines)


# -- CLI ----------------------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stableparareal", description="Parareal experiments on periodic 1-D problems.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run parareal from a JSON config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", type=Path)

    pr = sub.add_parser("preset", help="materialize a named preset and run it")
    pr.add_argument("name", choices=PRESETS)
    pr.add_argument("--scale", choices=("paper", "desk"), default="desk")
    pr.add_argument("--workers", type=int)
    pr.add_argument("--out", type=Path)

    ref = sub.add_parser("reference", help="fine sequential reference only")
    ref.add_argument("--config", required=True, type=Path)
    ref.add_argument("--out", required=True, type=Path)

    cmp_ = sub.add_parser("compare", help="recompute errors from stored artifacts")
    cmp_.add_argument("--trace", required=True, type=Path)
    cmp_.add_argument("--reference", required=True, type=Path)
    cmp_.add_argument("--out", type=Path, help="write errors.csv here")
    return p


def _load_config(path: Path) -> ExperimentConfig:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def _run_and_write(cfg: ExperimentConfig, workers, out) -> None:
    if workers is not None and workers < 1:
        raise ConfigurationError("--workers must be >= 1")
    out = out or (Path(cfg.output_dir) if cfg.output_dir else Path("output"))
    exp = run_experiment(cfg, workers)
    write_experiment(exp, out)
    print(_summary(exp.report))
    print(f"wrote {out}")


def cli(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            _run_and_write(_load_config(args.config), args.workers, args.out)
        elif args.command == "preset":
            cfg = preset(args.name, args.scale)
            _run_and_write(cfg, args.workers, args.out or Path("output") / f"{args.name}_{args.scale}")
        elif args.command == "reference":
            cfg = _load_config(args.config)
            ref = reference_snapshots(cfg)
            args.out.mkdir(parents=True, exist_ok=True)
            times = schedule_of(cfg).times
            save_states(args.out / "reference.npz", [ref], np.zeros((1, len(ref)), dtype=bool), times)
            (args.out / "run.json").write_text(cfg.to_json() + "\n")
            print(f"wrote {args.out / 'reference.npz'}")
        else:
            trace = load_trace_dir(args.trace)
            ref = load_reference_dir(args.reference)
            report = relative_error(trace, ref.states[0])
            if args.out is not None:
                emit_csv(report, trace, args.out)
            print(_summary(report))
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(cli())
