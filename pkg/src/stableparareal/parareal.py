"""Parareal iteration engine with optional manifold projection and damping.

Iterate ``k`` holds window states ``u[n]`` at ``T_n = n * dT_window``. One
iteration computes the fine images ``F(u_n^k)`` of all windows in a worker
pool, then sweeps the windows sequentially:

    u~_{n+1} = G(x_n^{k+1}) + F(u_n^k) - G(x_n^k)
    u_{n+1}  = pi(u~_{n+1})            (projected variants)

where ``x = Phi(u)`` for the damped variant and ``x = u`` otherwise. The
coarse images ``G(x_n^{k+1})`` produced by a sweep are reused as
``G(x_n^k)`` by the next iteration.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .manifold import (
    DampingFilter,
    DegenerateStateError,
    EnergyTargets,
    ProjectionError,
    burgers_group_targets,
    damp,
    energy_norm,
    group_energies,
    group_norms_sq,
    project_norm_groups,
    project_wave_groups,
)
from .propagators import ConfigurationError, DivergenceError, PropagatorSpec, WaveState, advance, step_count
from .spectral import GroupPartition, SpectralField, l2_norm

log = logging.getLogger(__name__)

VARIANTS = ("plain", "projected", "projected_damped")


@dataclass(frozen=True)
class Schedule:
    t_final: float
    n_windows: int

    def __post_init__(self):
        if self.n_windows < 1:
            raise ConfigurationError("n_windows must be >= 1")
        if not self.t_final > 0:
            raise ConfigurationError("t_final must be positive")

    @property
    def window(self) -> float:
        return self.t_final / self.n_windows

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_windows + 1) * self.window

    def bounds(self, n: int) -> tuple[float, float]:
        return n * self.window, (n + 1) * self.window


@dataclass(frozen=True)
class PararealRun:
    schedule: Schedule
    coarse: PropagatorSpec
    fine: PropagatorSpec
    initial: object
    variant: str = "plain"
    iterations: int = 0
    partition: Optional[GroupPartition] = None
    damping: Optional[DampingFilter] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; valid variants: {', '.join(VARIANTS)}")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.coarse.problem != self.fine.problem:
            raise ConfigurationError("coarse and fine propagators must solve the same problem")
        if self.coarse.dt < self.fine.dt:
            raise ConfigurationError(f"coarse dt {self.coarse.dt} is smaller than fine dt {self.fine.dt}")
        for spec in (self.coarse, self.fine):
            step_count(0.0, self.schedule.window, spec.dt)
        n = self.initial.max_mode
        for spec in (self.coarse, self.fine):
            if spec.space_modes is not None and spec.space_modes > n:
                raise ConfigurationError(f"space_modes {spec.space_modes} exceeds initial resolution {n}")
        if self.variant == "plain":
            if self.damping is not None:
                raise ConfigurationError("damping filter given for the plain variant")
        else:
            if self.partition is None:
                raise ConfigurationError(f"variant {self.variant!r} needs a group partition")
            if self.partition.max_mode != n:
                raise ConfigurationError(f"partition covers |l| <= {self.partition.max_mode}, state has {n}")
        if self.variant == "projected_damped":
            if self.damping is None:
                raise ConfigurationError("variant 'projected_damped' needs a damping filter")
            if self.damping.partition.max_mode != n:
                raise ConfigurationError("damping partition does not match the state resolution")
        elif self.variant == "projected" and self.damping is not None:
            raise ConfigurationError("damping filter given for variant 'projected'")

    @property
    def kind(self) -> str:
        return self.coarse.problem.kind

    @property
    def is_wave(self) -> bool:
        return self.kind == "wave"


@dataclass
class IterationTrace:
    """Measured states and per-(k, n) diagnostics of one parareal run.

    ``states[k][n]`` is the post-projection, pre-damping state. Array
    diagnostics have shape ``(K + 1, N_windows + 1)``.
    """

    run: PararealRun
    states: list = field(default_factory=list)
    diverged: np.ndarray = None
    projection_failed: np.ndarray = None
    projection_fallback: np.ndarray = None
    norms: np.ndarray = None
    norm_identity: np.ndarray = None
    lambdas: dict = field(default_factory=dict)
    group_values: dict = field(default_factory=dict)

    @property
    def n_iterations(self) -> int:
        return len(self.states) - 1

    @property
    def times(self) -> np.ndarray:
        return self.run.schedule.times


# -- helpers --------------------------------------------------------------------

def _nan_like(state):
    if isinstance(state, WaveState):
        return WaveState(_nan_like(state.u), _nan_like(state.v))
    return state.with_coeffs(np.full(state.coeffs.size, np.nan + 0j))


def _advance_task(args):
    state, t0, t1, spec = args
    if not state.is_finite():
        return _nan_like(state), True
    try:
        out = advance(state, t0, t1, spec)
    except DivergenceError:
        return _nan_like(state), True
    if not out.is_finite():
        return _nan_like(state), True
    return out, False


def state_norm(state, run: PararealRun) -> float:
    """Energy norm for the wave, L2 norm otherwise."""
    if run.is_wave:
        return energy_norm(state, run.coarse.problem.c)
    return l2_norm(state)


class _Engine:
    def __init__(self, run: PararealRun, workers: int):
        self.run = run
        self.workers = max(1, int(workers))
        self.sched = run.schedule
        self.damped = run.variant == "projected_damped"
        self.projected = run.variant != "plain"
        self.c = run.coarse.problem.c if run.is_wave else None
        if self.projected and run.is_wave:
            self.wave_targets = EnergyTargets(run.partition, group_energies(run.initial, self.c, run.partition))

    # propagation ----------------------------------------------------------------

    def coarse(self, state, n):
        return _advance_task((state, *self.sched.bounds(n), self.run.coarse))

    def parallel(self, states, spec, pool):
        tasks = [(s, *self.sched.bounds(n), spec) for n, s in enumerate(states)]
        if pool is None:
            return [_advance_task(t) for t in tasks]
        chunk = max(1, len(tasks) // (4 * self.workers))
        return list(pool.map(_advance_task, tasks, chunksize=chunk))

    def bar(self, state):
        return damp(state, self.run.damping) if self.damped else state

    # projection -------------------------------------------------------------------

    def project(self, k, n, state, prev_k=None, fine_prev_k=None, prev_kp1=None, trace=None):
        """Project window ``n`` of iterate ``k``; returns (state, lambdas, failed)."""
        if not self.projected or not state.is_finite():
            return state, None, False
        run = self.run
        try:
            if run.is_wave:
                out, lams, fell_back = project_wave_groups(state, self.c, self.wave_targets)
                if fell_back and trace is not None:
                    trace.projection_fallback[k, n] = True
            else:
                if prev_k is None:
                    return state, None, False
                if not (prev_k.is_finite() and fine_prev_k.is_finite() and prev_kp1.is_finite()):
                    return state, None, True
                targets = burgers_group_targets(prev_k, fine_prev_k, prev_kp1, run.partition)
                out, lams, _ = project_norm_groups(state, targets)
        except (ProjectionError, DegenerateStateError) as exc:
            log.warning("projection failed at iteration %d window %d: %s", k, n, exc)
            return state, None, True
        return out, lams, False

    # driver -------------------------------------------------------------------------

    def execute(self) -> IterationTrace:
        run = self.run
        K, N = run.iterations, self.sched.n_windows
        trace = IterationTrace(run=run)
        trace.diverged = np.zeros((K + 1, N + 1), dtype=bool)
        trace.projection_failed = np.zeros((K + 1, N + 1), dtype=bool)
        trace.projection_fallback = np.zeros((K + 1, N + 1), dtype=bool)
        trace.norm_identity = np.full((K + 1, N + 1), np.nan)

        pool = ProcessPoolExecutor(max_workers=self.workers) if self.workers > 1 and K > 0 else None
        try:
            states, coarse_prev = self.initialize(trace)
            trace.states.append(states)
            for k in range(K):
                states, coarse_prev = self.iterate(k, states, coarse_prev, trace, pool)
                trace.states.append(states)
        finally:
            if pool is not None:
                pool.shutdown()

        with np.errstate(over="ignore", invalid="ignore"):
            trace.norms = np.array([[state_norm(s, run) for s in row] for row in trace.states])
        for k, row in enumerate(trace.states):
            for n, s in enumerate(row):
                if not s.is_finite():
                    trace.diverged[k, n] = True
                    continue
                if run.partition is not None:
                    trace.group_values[k, n] = (group_energies(s, self.c, run.partition) if run.is_wave
                                                else group_norms_sq(s, run.partition))
        return trace

    def initialize(self, trace):
        """Sequential coarse sweep ``u_{n+1} = G(u_n)``.

        Returns the states and the coarse images reusable by iteration 1, or
        ``None`` for the damped variant whose next sweep needs ``G(Phi(u))``.
        """
        y0 = self.run.initial
        states = [y0]
        coarse_images = []
        for n in range(self.sched.n_windows):
            g, bad = self.coarse(states[n], n)
            trace.diverged[0, n + 1] |= bad
            coarse_images.append(g)
            u, lams, failed = self.project(0, n + 1, g, trace=trace)
            trace.projection_failed[0, n + 1] = failed
            if lams is not None:
                trace.lambdas[0, n + 1] = lams
            states.append(u)
        return states, (None if self.damped else coarse_images)

    def iterate(self, k, states, coarse_prev, trace, pool):
        run = self.run
        N = self.sched.n_windows
        fine = self.parallel(states[:N], run.fine, pool)
        fine_images = [f for f, _ in fine]
        if coarse_prev is None:
            coarse_prev = [g for g, _ in self.parallel([self.bar(s) for s in states[:N]], run.coarse, pool)]
        new = [run.initial]
        coarse_next = []
        for n in range(N):
            g, bad = self.coarse(self.bar(new[n]), n)
            coarse_next.append(g)
            u_tilde = g + fine_images[n] - coarse_prev[n]
            u, lams, failed = self.project(k + 1, n + 1, u_tilde, states[n], fine_images[n], new[n], trace)
            trace.diverged[k + 1, n + 1] |= bad or fine[n][1]
            trace.projection_failed[k + 1, n + 1] = failed
            if lams is not None:
                trace.lambdas[k + 1, n + 1] = lams
                if not run.is_wave:
                    trace.norm_identity[k + 1, n + 1] = _norm_identity_residual(
                        u, states[n], fine_images[n], new[n])
            new.append(u)
        return new, coarse_next


def _norm_identity_residual(u_next, prev_k, fine_prev_k, prev_kp1) -> float:
    """Relative defect of ``||u_{n+1}^{k+1}|| = ||F(u_n^k)|| / ||u_n^k|| * ||u_n^{k+1}||``."""
    lhs = l2_norm(u_next)
    rhs = l2_norm(fine_prev_k) / l2_norm(prev_k) * l2_norm(prev_kp1)
    return abs(lhs - rhs) / max(rhs, np.finfo(float).tiny)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run(run: PararealRun, workers: int = 1) -> IterationTrace:
    """Coarse initialization followed by ``run.iterations`` parareal iterations."""
    return _Engine(run, workers).execute()


def coarse_init(run: PararealRun) -> list:
    """Iteration-0 states only."""
    eng = _Engine(run, 1)
    K, N = 0, run.schedule.n_windows
    trace = IterationTrace(run=run)
    trace.diverged = np.zeros((K + 1, N + 1), dtype=bool)
    trace.projection_failed = np.zeros((K + 1, N + 1), dtype=bool)
    trace.projection_fallback = np.zeros((K + 1, N + 1), dtype=bool)
    states, _ = eng.initialize(trace)
    return states


def fine_sequential(initial, schedule: Schedule, fine: PropagatorSpec) -> list:
    """Snapshots of one sequential fine sweep at every window time."""
    out = [initial]
    for n in range(schedule.n_windows):
        try:
            nxt = advance(out[-1], *schedule.bounds(n), fine)
        except DivergenceError as exc:
            raise DivergenceError(f"fine sweep diverged in window {n}; last good window {n}") from exc
        if not nxt.is_finite():
            raise DivergenceError(f"fine sweep diverged in window {n}; last good window {n}")
        out.append(nxt)
    return out


def iterate(run: PararealRun, states: list, coarse_images: Optional[list] = None, k: int = 0):
    """One parareal iteration of ``run.variant`` from the states of iterate ``k``.

    ``coarse_images`` are ``G(x_n^k)`` from the previous sweep, recomputed when
    omitted. Returns the new states and the coarse images of the new sweep.
    """
    eng = _Engine(run, 1)
    N = run.schedule.n_windows
    trace = IterationTrace(run=run)
    trace.diverged = np.zeros((k + 2, N + 1), dtype=bool)
    trace.projection_failed = np.zeros((k + 2, N + 1), dtype=bool)
    trace.projection_fallback = np.zeros((k + 2, N + 1), dtype=bool)
    trace.norm_identity = np.full((k + 2, N + 1), np.nan)
    return eng.iterate(k, states, coarse_images, trace, None)
