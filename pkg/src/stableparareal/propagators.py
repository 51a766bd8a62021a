"""Coarse and fine time propagators for the three model problems.

All propagators are pure functions of their inputs. The window ``[t0, t1]``
is cut into ``round((t1 - t0) / dt)`` equal steps; a step size that does not
divide the window is a configuration error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import fft as sfft

from .spectral import SpectralField, dealias_points, prolong, truncate

STEP_RTOL = 1e-12


class ConfigurationError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    """A propagated state stopped being finite."""


@dataclass(frozen=True)
class WaveProblem:
    c: float
    kind: str = "wave"


@dataclass(frozen=True)
class ParabolicProblem:
    mu: float
    kind: str = "parabolic"


@dataclass(frozen=True)
class BurgersProblem:
    nu: float
    kind: str = "burgers"


Problem = Union[WaveProblem, ParabolicProblem, BurgersProblem]

SCHEMES = ("crank_nicolson", "implicit_euler")


@dataclass(frozen=True)
class PropagatorSpec:
    problem: Problem
    dt: float
    space_modes: Optional[int] = None
    scheme: str = "crank_nicolson"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown parabolic scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.space_modes is not None and self.space_modes < 1:
            raise ConfigurationError("space_modes must be >= 1")


@dataclass(frozen=True, eq=False)
class WaveState:
    """Displacement ``u`` and velocity ``v = du/dt`` on the same band."""

    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.period != self.v.period or self.u.max_mode != self.v.max_mode:
            raise ValueError("displacement and velocity must share period and max_mode")

    @property
    def period(self) -> float:
        return self.u.period

    @property
    def max_mode(self) -> int:
        return self.u.max_mode

    def is_finite(self) -> bool:
        return self.u.is_finite() and self.v.is_finite()

    def __add__(self, other):
        if not isinstance(other, WaveState):
            return NotImplemented
        return WaveState(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        if not isinstance(other, WaveState):
            return NotImplemented
        return WaveState(self.u - other.u, self.v - other.v)

    def __mul__(self, scalar):
        return WaveState(self.u * scalar, self.v * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return WaveState(-self.u, -self.v)

    @classmethod
    def zeros(cls, max_mode: int, period: float) -> "WaveState":
        z = SpectralField.zeros(max_mode, period)
        return cls(z, z)


def step_count(t0: float, t1: float, dt: float) -> int:
    if not t1 > t0:
        raise ConfigurationError(f"window [{t0}, {t1}] is empty")
    ratio = (t1 - t0) / dt
    n = int(round(ratio))
    if n < 1 or abs(n - ratio) > STEP_RTOL * ratio:
        raise ConfigurationError(f"step {dt} does not divide window length {t1 - t0} (ratio {ratio!r})")
    return n


# -- wave ---------------------------------------------------------------------

def _verlet(u, v, w2, delta, n):
    h = 0.5 * delta
    acc = -w2 * u
    for _ in range(n):
        v = v + h * acc
        u = u + delta * v
        acc = -w2 * u
        v = v + h * acc
    return u, v


def wave_verlet_step(state: WaveState, delta: float, c: float) -> WaveState:
    w2 = (c * state.u.wavenumbers) ** 2
    u, v = _verlet(state.u.coeffs, state.v.coeffs, w2, delta, 1)
    return WaveState(state.u.with_coeffs(u), state.v.with_coeffs(v))


def wave_propagate(state: WaveState, t0: float, t1: float, spec: PropagatorSpec) -> WaveState:
    n = step_count(t0, t1, spec.dt)
    w2 = (spec.problem.c * state.u.wavenumbers) ** 2
    with np.errstate(over="ignore", invalid="ignore"):
        u, v = _verlet(state.u.coeffs, state.v.coeffs, w2, spec.dt, n)
    return WaveState(state.u.with_coeffs(u), state.v.with_coeffs(v))


# -- parabolic ----------------------------------------------------------------

def parabolic_factor(field: SpectralField, delta: float, mu: float, scheme: str) -> np.ndarray:
    """Per-mode amplification for ``u_t - mu u_xx + u_x = 0``.

    With symbol ``s = mu k^2 + i k`` (``k = l`` on a 2 pi period):
    implicit Euler gives ``1 / (1 + delta s)``, Crank-Nicolson the Cayley factor.
    """
    k = field.wavenumbers
    s = mu * k**2 + 1j * k
    if scheme == "implicit_euler":
        return 1.0 / (1.0 + delta * s)
    if scheme == "crank_nicolson":
        return (1.0 - 0.5 * delta * s) / (1.0 + 0.5 * delta * s)
    raise ConfigurationError(f"unknown parabolic scheme {scheme!r}; expected one of {SCHEMES}")


def parabolic_step(field: SpectralField, delta: float, mu: float, scheme: str = "crank_nicolson") -> SpectralField:
    return field.with_coeffs(field.coeffs * parabolic_factor(field, delta, mu, scheme))


def parabolic_propagate(field: SpectralField, t0: float, t1: float, spec: PropagatorSpec) -> SpectralField:
    n = step_count(t0, t1, spec.dt)
    g = parabolic_factor(field, spec.dt, spec.problem.mu, spec.scheme)
    c = field.coeffs
    for _ in range(n):
        c = c * g
    return field.with_coeffs(c)


# -- Burgers ------------------------------------------------------------------
# Internally the Burgers loop works on the l >= 0 half of the spectrum; the
# l < 0 half is recovered by conjugation, which keeps the field exactly real.

class _BurgersKernel:
    def __init__(self, max_mode: int, period: float, nu: float, delta: float):
        self.n = max_mode
        self.m = dealias_points(max_mode)
        self.k = 2.0 * np.pi * np.arange(max_mode + 1) / period
        self.delta = delta
        self.half_diffusion = np.exp(-nu * self.k**2 * delta / 2.0)
        self._buf = np.zeros(self.m // 2 + 1, dtype=np.complex128)

    def rhs(self, c):
        """Half spectrum of ``-1/2 d(u^2)/dx``."""
        buf = self._buf
        buf[: self.n + 1] = c * self.m
        u = sfft.irfft(buf, n=self.m)
        sq = sfft.rfft(u * u)[: self.n + 1] / self.m
        return -0.5j * self.k * sq

    def convect(self, c):
        d = self.delta
        c1 = c + d * self.rhs(c)
        c2 = 0.75 * c + 0.25 * (c1 + d * self.rhs(c1))
        return c / 3.0 + (2.0 / 3.0) * (c2 + d * self.rhs(c2))

    def step(self, c):
        c = c * self.half_diffusion
        c = self.convect(c)
        if not np.all(np.isfinite(c)):
            raise DivergenceError("non-finite coefficients after the convection stage")
        return c * self.half_diffusion


def _half(field: SpectralField) -> np.ndarray:
    return field.coeffs[field.max_mode :].copy()


def _full(field: SpectralField, half: np.ndarray) -> SpectralField:
    half = half.copy()
    half[0] = half[0].real
    return field.with_coeffs(np.concatenate([np.conj(half[:0:-1]), half]))


def burgers_strang_step(field: SpectralField, delta: float, nu: float) -> SpectralField:
    """Half diffusion (exact), SSP-RK3 convection, half diffusion."""
    if not delta > 0 or nu < 0:
        raise ConfigurationError("need delta > 0 and nu >= 0")
    kern = _BurgersKernel(field.max_mode, field.period, nu, delta)
    with np.errstate(over="ignore", invalid="ignore"):
        return _full(field, kern.step(_half(field)))


def burgers_propagate(field: SpectralField, t0: float, t1: float, spec: PropagatorSpec) -> SpectralField:
    n = step_count(t0, t1, spec.dt)
    kern = _BurgersKernel(field.max_mode, field.period, spec.problem.nu, spec.dt)
    c = _half(field)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            c = kern.step(c)
    return _full(field, c)


# -- uniform interface --------------------------------------------------------

_PROPAGATE = {
    "wave": wave_propagate,
    "parabolic": parabolic_propagate,
    "burgers": burgers_propagate,
}


def _resolution(state) -> int:
    return state.max_mode


def _truncate_state(state, n):
    if isinstance(state, WaveState):
        return WaveState(truncate(state.u, n), truncate(state.v, n))
    return truncate(state, n)


def _prolong_state(state, n):
    if isinstance(state, WaveState):
        return WaveState(prolong(state.u, n), prolong(state.v, n))
    return prolong(state, n)


def advance(state, t0: float, t1: float, spec: PropagatorSpec):
    """Propagate ``state`` over ``[t0, t1]`` with ``spec``.

    A spec with fewer spatial modes than the state truncates, propagates on the
    coarse band and zero-pads back to the state's resolution.
    """
    kind = spec.problem.kind
    if (kind == "wave") != isinstance(state, WaveState):
        raise ConfigurationError(f"state type {type(state).__name__} does not match problem {kind!r}")
    n = _resolution(state)
    nc = spec.space_modes
    if nc is not None and nc > n:
        raise ConfigurationError(f"propagator resolution {nc} exceeds state resolution {n}")
    if nc is None or nc == n:
        return _PROPAGATE[kind](state, t0, t1, spec)
    coarse = _PROPAGATE[kind](_truncate_state(state, nc), t0, t1, spec)
    return _prolong_state(coarse, n)
