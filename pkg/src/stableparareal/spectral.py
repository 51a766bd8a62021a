"""Fourier representation of real periodic fields on [0, period).

A field is stored as the full coefficient vector ``coeffs[l + N]`` for
``l = -N..N`` so that ``u(x) = sum_l coeffs[l + N] * exp(i l 2 pi x / period)``.
With the inner product ``(u, v) = int_0^period u conj(v) dx`` the squared
L2 norm is ``period * sum |coeffs|**2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft


class SamplingError(ValueError):
    """Too few physical samples for the requested band."""


@dataclass(frozen=True, eq=False)
class SpectralField:
    period: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError(f"coefficient vector must have odd length 2N+1, got shape {c.shape}")
        if c.size < 3:
            raise ValueError("max_mode must be >= 1")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "period", float(self.period))

    @property
    def max_mode(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        n = self.max_mode
        return np.arange(-n, n + 1)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * self.modes / self.period

    def mode(self, l: int) -> complex:
        return complex(self.coeffs[l + self.max_mode])

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.period, coeffs)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def _check(self, other: "SpectralField"):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.coeffs.size != self.coeffs.size or other.period != self.period:
            raise ValueError("fields differ in period or resolution")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar) or np.iscomplexobj(scalar):
            return NotImplemented
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __repr__(self):
        return f"SpectralField(period={self.period}, max_mode={self.max_mode})"

    @classmethod
    def zeros(cls, max_mode: int, period: float) -> "SpectralField":
        return cls(period, np.zeros(2 * max_mode + 1, dtype=np.complex128))

    @classmethod
    def from_modes(cls, max_mode: int, period: float, values: dict[int, complex]) -> "SpectralField":
        c = np.zeros(2 * max_mode + 1, dtype=np.complex128)
        for l, val in values.items():
            c[l + max_mode] = val
        return cls(period, c)


def hermitian_defect(field: SpectralField) -> float:
    """Largest ``|c_{-l} - conj(c_l)|`` over the band."""
    c = field.coeffs
    return float(np.max(np.abs(c[::-1] - np.conj(c))))


@dataclass(frozen=True)
class GroupPartition:
    """Bands of absolute mode index: group i holds ``b[i-1] <= |l| < b[i]``."""

    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        if len(b) < 2 or b[0] != 0:
            raise ValueError(f"boundaries must start at 0 and define at least one group, got {b}")
        if any(lo >= hi for lo, hi in zip(b, b[1:])):
            raise ValueError(f"boundaries must be strictly increasing, got {b}")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_groups(self) -> int:
        return len(self.boundaries) - 1

    @property
    def max_mode(self) -> int:
        return self.boundaries[-1] - 1

    @classmethod
    def trivial(cls, max_mode: int) -> "GroupPartition":
        return cls((0, max_mode + 1))

    @classmethod
    def split(cls, max_mode: int, cuts: Sequence[int]) -> "GroupPartition":
        return cls((0, *cuts, max_mode + 1))

    @classmethod
    def uniform(cls, max_mode: int, n_groups: int) -> "GroupPartition":
        edges = np.linspace(0, max_mode + 1, n_groups + 1).round().astype(int)
        return cls(tuple(edges))

    def _index(self, i: int) -> int:
        if not 1 <= i <= self.n_groups:
            raise IndexError(f"group index {i} outside 1..{self.n_groups}")
        return i

    def mask(self, i: int, max_mode: int) -> np.ndarray:
        """Boolean mask over ``l = -max_mode..max_mode`` selecting group ``i``."""
        self._index(i)
        if max_mode != self.max_mode:
            raise ValueError(f"partition covers |l| <= {self.max_mode}, field has max_mode {max_mode}")
        a = np.abs(np.arange(-max_mode, max_mode + 1))
        return (a >= self.boundaries[i - 1]) & (a < self.boundaries[i])

    def masks(self, max_mode: int) -> list[np.ndarray]:
        return [self.mask(i, max_mode) for i in range(1, self.n_groups + 1)]


def field_from_samples(samples, period: float, max_mode: int) -> SpectralField:
    """Truncated DFT of uniform samples ``x_j = j * period / M``."""
    s = np.asarray(samples, dtype=np.float64)
    m = s.size
    if m < 2 * (2 * max_mode + 1):
        raise SamplingError(f"{m} samples cannot resolve max_mode={max_mode}; need at least {2 * (2 * max_mode + 1)}")
    half = sfft.rfft(s)[: max_mode + 1] / m
    half[0] = half[0].real
    return SpectralField(period, np.concatenate([np.conj(half[:0:-1]), half]))


def field_to_samples(field: SpectralField, m: int) -> np.ndarray:
    n = field.max_mode
    if m < 2 * n + 1:
        raise SamplingError(f"{m} points cannot represent max_mode={n}")
    half = np.zeros(m // 2 + 1, dtype=np.complex128)
    half[: n + 1] = field.coeffs[n:] * m
    return sfft.irfft(half, n=m)


def grid(period: float, m: int) -> np.ndarray:
    return np.arange(m) * (period / m)


def inner(f: SpectralField, g: SpectralField) -> complex:
    """``(f, g) = int f conj(g) dx`` for equal-resolution fields."""
    return complex(f.period * np.vdot(g.coeffs, f.coeffs))


def l2_norm_sq(field: SpectralField) -> float:
    c = field.coeffs
    return float(field.period * np.sum(c.real**2 + c.imag**2))


def l2_norm(field: SpectralField) -> float:
    return float(np.sqrt(l2_norm_sq(field)))


def spatial_derivative(field: SpectralField) -> SpectralField:
    return field.with_coeffs(1j * field.wavenumbers * field.coeffs)


def truncate(field: SpectralField, n_coarse: int) -> SpectralField:
    n = field.max_mode
    if n_coarse > n:
        raise ValueError(f"cannot truncate max_mode {n} to larger {n_coarse}")
    return field.with_coeffs(field.coeffs[n - n_coarse : n + n_coarse + 1])


def prolong(field: SpectralField, n_fine: int) -> SpectralField:
    n = field.max_mode
    if n_fine < n:
        raise ValueError(f"cannot prolong max_mode {n} to smaller {n_fine}")
    pad = n_fine - n
    return field.with_coeffs(np.pad(field.coeffs, (pad, pad)))


def group_project(field: SpectralField, partition: GroupPartition, i: int) -> SpectralField:
    keep = partition.mask(i, field.max_mode)
    return field.with_coeffs(np.where(keep, field.coeffs, 0.0))


def dealias_points(max_mode: int) -> int:
    """Physical grid size for an alias-free quadratic product on the doubled band."""
    return sfft.next_fast_len(2 * (2 * (2 * max_mode) + 1), real=True)


def dealias_square_derivative(field: SpectralField) -> SpectralField:
    """Galerkin coefficients of d(u^2)/dx on |l| <= N, computed alias-free."""
    n = field.max_mode
    m = dealias_points(n)
    half = np.zeros(m // 2 + 1, dtype=np.complex128)
    half[: n + 1] = field.coeffs[n:] * m
    u = sfft.irfft(half, n=m)
    sq = sfft.rfft(u * u)[: n + 1] / m
    sq[0] = sq[0].real
    full = np.concatenate([np.conj(sq[:0:-1]), sq])
    return SpectralField(field.period, 1j * field.wavenumbers * full)


def init_power_law(max_mode: int, p: float, style: str, period: float = 2.0 * np.pi) -> SpectralField:
    """Power-law spectrum with zero mean.

    ``style="parabolic"``: ``+-0.5i / |l|**p`` (a real sine series).
    ``style="wave"``: ``1 / |l|**p`` (a real cosine series).
    """
    l = np.arange(-max_mode, max_mode + 1)
    mag = np.zeros(l.size)
    nz = l != 0
    mag[nz] = 1.0 / np.abs(l[nz]).astype(float) ** p
    if style == "parabolic":
        c = 0.5j * np.sign(l) * mag
    elif style == "wave":
        c = mag.astype(np.complex128)
    else:
        raise ValueError(f"unknown power-law style {style!r}; expected 'parabolic' or 'wave'")
    return SpectralField(period, c)


def ricker(x, f_s: float, x_s: float, c: float):
    a = (f_s * np.pi * (np.asarray(x) - x_s) / c) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def init_ricker(max_mode: int, f_s: float, x_s: float, c: float, period: float) -> SpectralField:
    if not 0.0 <= x_s < period:
        raise ValueError(f"source position {x_s} outside [0, {period})")
    m = 8 * (2 * max_mode + 1)
    return field_from_samples(ricker(grid(period, m), f_s, x_s, c), period, max_mode)


def init_sine(max_mode: int, amplitude: float = 1.0, period: float = 2.0 * np.pi, mode: int = 1) -> SpectralField:
    """``amplitude * sin(mode * 2 pi x / period)``."""
    if not 1 <= mode <= max_mode:
        raise ValueError(f"mode {mode} outside 1..{max_mode}")
    return SpectralField.from_modes(max_mode, period, {mode: -0.5j * amplitude, -mode: 0.5j * amplitude})
