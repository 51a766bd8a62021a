"""Energy functionals, manifold projections and the high-mode damping filter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .propagators import WaveState
from .spectral import GroupPartition, SpectralField, l2_norm


class ProjectionError(ArithmeticError):
    def __init__(self, group: int, message: str):
        super().__init__(f"group {group}: {message}")
        self.group = group


class DegenerateStateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EnergyTargets:
    partition: GroupPartition
    targets: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(x) for x in self.targets)
        if len(t) != self.partition.n_groups:
            raise ValueError(f"{len(t)} targets for {self.partition.n_groups} groups")
        if any(not x >= 0 for x in t):
            raise ValueError(f"targets must be non-negative, got {t}")
        object.__setattr__(self, "targets", t)


@dataclass(frozen=True)
class DampingFilter:
    partition: GroupPartition
    factors: tuple[float, ...]

    def __post_init__(self):
        f = tuple(float(x) for x in self.factors)
        if len(f) != self.partition.n_groups:
            raise ValueError(f"{len(f)} factors for {self.partition.n_groups} groups")
        if f[0] != 1.0:
            raise ValueError("the lowest group must be left untouched (factor 1)")
        if any(not 0.0 < x <= 1.0 for x in f):
            raise ValueError(f"damping factors must lie in (0, 1], got {f}")
        object.__setattr__(self, "factors", f)

    @classmethod
    def from_rule(cls, partition: GroupPartition, rule: str = "default") -> "DampingFilter":
        """``default``: ``f(i) = 1/(i^2+1)``; ``two_group``: ``f(i) = 1/(3i+1)``."""
        if rule == "default":
            f = lambda i: 1.0 / (i * i + 1.0)
        elif rule == "two_group":
            f = lambda i: 1.0 / (3 * i + 1.0)
        else:
            raise ValueError(f"unknown damping rule {rule!r}; expected 'default' or 'two_group'")
        return cls(partition, (1.0, *(f(i) for i in range(2, partition.n_groups + 1))))

    @classmethod
    def identity(cls, partition: GroupPartition) -> "DampingFilter":
        return cls(partition, (1.0,) * partition.n_groups)


# -- wave energies ------------------------------------------------------------

def mode_energy(u_hat: complex, v_hat: complex, l: int, c: float, period: float) -> float:
    return abs(v_hat) ** 2 + (2.0 * np.pi / period) ** 2 * l * l * c * c * abs(u_hat) ** 2


def _mode_energies(state: WaveState, c: float) -> np.ndarray:
    ck2 = (c * state.u.wavenumbers) ** 2
    u, v = state.u.coeffs, state.v.coeffs
    return (v.real**2 + v.imag**2) + ck2 * (u.real**2 + u.imag**2)


def hamiltonian(state: WaveState, c: float) -> float:
    """``||u_t||^2 + c^2 ||u_x||^2`` over one period."""
    return float(state.period * np.sum(_mode_energies(state, c)))


def group_energy(state: WaveState, c: float, partition: GroupPartition, i: int) -> float:
    mask = partition.mask(i, state.max_mode)
    return float(state.period * np.sum(_mode_energies(state, c)[mask]))


def group_energies(state: WaveState, c: float, partition: GroupPartition) -> tuple[float, ...]:
    e = _mode_energies(state, c)
    return tuple(float(state.period * np.sum(e[m])) for m in partition.masks(state.max_mode))


def energy_norm(state: WaveState, c: float) -> float:
    return float(np.sqrt(hamiltonian(state, c)))


# -- multiplier solves --------------------------------------------------------

def smallest_root(a: float, b: float, c: float) -> float:
    """Root of ``a x^2 + 2 b x + c`` nearest zero; ``ValueError`` if none is real."""
    if a == 0.0:
        if b == 0.0:
            if c == 0.0:
                return 0.0
            raise ValueError("constant nonzero equation")
        return -c / (2.0 * b)
    disc = b * b - a * c
    if disc < 0.0:
        raise ValueError(f"negative discriminant {disc}")
    if c == 0.0:
        return 0.0
    q = -(b + np.copysign(np.sqrt(disc), b))
    return c / q


def newton_root(phi: Callable[[float], float], dphi: Callable[[float], float],
                x0: float = 0.0, rtol: float = 1e-12, max_iter: int = 50) -> float:
    """Damped Newton for ``phi(x) = 0`` with a bisection fallback.

    Steps are halved until ``|phi|`` decreases. If that fails the root is
    bracketed by doubling outward from ``x0`` and refined by bisection.
    """
    x = x0
    fx = phi(x)
    scale = max(abs(fx), 1.0)
    for _ in range(max_iter):
        if abs(fx) <= rtol * scale:
            return x
        d = dphi(x)
        if d == 0.0:
            break
        step = -fx / d
        for _ in range(30):
            xn = x + step
            fn = phi(xn)
            if abs(fn) < abs(fx):
                break
            step *= 0.5
        else:
            break
        if abs(xn - x) <= rtol * max(abs(xn), 1e-300) and abs(fn) <= 1e3 * rtol * scale:
            return xn
        x, fx = xn, fn
    return bisect_root(phi, x0, rtol=rtol)


def _bisect(phi, lo, hi, rtol):
    flo = phi(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= rtol * abs(mid):
            return mid
        fm = phi(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisect_root(phi: Callable[[float], float], x0: float = 0.0, rtol: float = 1e-12) -> float:
    """Root nearest ``x0``: scan outward on a geometric grid, then bisect the first bracket."""
    f0 = phi(x0)
    if f0 == 0.0:
        return x0
    prev = {1: (x0, f0), -1: (x0, f0)}
    width = 1e-8
    for _ in range(2000):
        roots = []
        for side in (1, -1):
            cand = x0 + side * width
            fc = phi(cand)
            xp, fp = prev[side]
            if np.sign(fc) != np.sign(fp):
                roots.append(_bisect(phi, *sorted((xp, cand)), rtol))
            prev[side] = (cand, fc)
        if roots:
            return min(roots, key=lambda r: abs(r - x0))
        width *= 1.05
    raise ValueError("could not bracket a root")


# -- projections ----------------------------------------------------------------

def _wave_group_quadratic(state: WaveState, c: float, mask: np.ndarray):
    """Coefficients of ``H_i(x + lam g) = A lam^2 + 2 B lam + C0`` with ``g`` the group gradient."""
    t = state.period
    ck2 = ((c * state.u.wavenumbers) ** 2)[mask]
    u, v = state.u.coeffs[mask], state.v.coeffs[mask]
    gu, gv = 2.0 * ck2 * u, 2.0 * v
    c0 = t * float(np.sum(ck2 * np.abs(u) ** 2 + np.abs(v) ** 2))
    b = t * float(np.sum(ck2 * (u.conj() * gu).real + (v.conj() * gv).real))
    a = t * float(np.sum(ck2 * np.abs(gu) ** 2 + np.abs(gv) ** 2))
    return a, b, c0, gu, gv


class Projection(NamedTuple):
    state: object
    lambdas: tuple[float, ...]
    fallback: tuple[int, ...] = ()


def project_wave_groups(state: WaveState, c: float, targets: EnergyTargets,
                        method: str = "quadratic", fallback: bool = True) -> Projection:
    """Restore each group energy along its own gradient ray.

    The ray is ``x + lam * g`` with ``g = (2 c^2 k^2 u, 2 v)`` restricted to the
    group, and ``lam`` is the root nearest zero of the quadratic ``H_i = target``.
    When that ray never reaches the target (its minimum energy lies above it)
    and ``fallback`` is set, the group is moved along ``g = 2 x`` instead, i.e.
    rescaled; the indices of such groups are reported in ``Projection.fallback``.
    ``method="newton"`` solves the scalar equations iteratively instead.
    """
    if method not in ("quadratic", "newton"):
        raise ValueError(f"unknown multiplier method {method!r}")
    u = state.u.coeffs.copy()
    v = state.v.coeffs.copy()
    lams = []
    used_fallback = []
    for i, (mask, target) in enumerate(zip(targets.partition.masks(state.max_mode), targets.targets), start=1):
        a, b, c0, gu, gv = _wave_group_quadratic(state, c, mask)
        if a == 0.0:
            if target == 0.0:
                lams.append(0.0)
                continue
            raise ProjectionError(i, "zero group component cannot reach a nonzero energy")
        try:
            if method == "quadratic":
                lam = smallest_root(a, b, c0 - target)
            else:
                lam = newton_root(lambda x: a * x * x + 2 * b * x + c0 - target, lambda x: 2 * a * x + 2 * b)
        except ValueError as exc:
            if not fallback or c0 == 0.0:
                raise ProjectionError(i, f"energy {target} unreachable along the gradient ray ({exc})") from None
            scale = np.sqrt(target / c0)
            u[mask] *= scale
            v[mask] *= scale
            lams.append(float((scale - 1.0) / 2.0))
            used_fallback.append(i)
            continue
        u[mask] += lam * gu
        v[mask] += lam * gv
        lams.append(float(lam))
    return Projection(WaveState(state.u.with_coeffs(u), state.v.with_coeffs(v)), tuple(lams), tuple(used_fallback))


def burgers_group_targets(u_prev_k: SpectralField, fine_of_prev_k: SpectralField,
                          u_prev_kp1: SpectralField, partition: GroupPartition) -> EnergyTargets:
    """Squared group norms ``(||P_i F(u_n^k)|| / ||u_n^k|| * ||u_n^{k+1}||)^2``."""
    denom = l2_norm(u_prev_k)
    if denom == 0.0:
        raise DegenerateStateError("previous iterate has zero norm")
    scale = l2_norm(u_prev_kp1) / denom
    c = fine_of_prev_k.coeffs
    e = fine_of_prev_k.period * (c.real**2 + c.imag**2)
    targets = [(np.sqrt(float(np.sum(e[m]))) * scale) ** 2 for m in partition.masks(fine_of_prev_k.max_mode)]
    return EnergyTargets(partition, tuple(targets))


def project_norm_groups(field: SpectralField, targets: EnergyTargets) -> Projection:
    """Per-group rescaling onto ``||P_i v||^2 = target_i``.

    For a norm constraint the gradient ray ``v + lam * 2 v`` is a pure
    scaling, so the multiplier is ``(s - 1) / 2`` with ``s`` the scale factor.
    """
    c = field.coeffs.copy()
    e = field.period * (c.real**2 + c.imag**2)
    lams = []
    for i, (mask, target) in enumerate(zip(targets.partition.masks(field.max_mode), targets.targets), start=1):
        cur = float(np.sum(e[mask]))
        if cur == 0.0:
            if target == 0.0:
                lams.append(0.0)
                continue
            raise ProjectionError(i, "zero group component cannot reach a nonzero norm")
        s = np.sqrt(target / cur)
        c[mask] *= s
        lams.append(float((s - 1.0) / 2.0))
    return Projection(field.with_coeffs(c), tuple(lams))


def group_norms_sq(field: SpectralField, partition: GroupPartition) -> tuple[float, ...]:
    c = field.coeffs
    e = field.period * (c.real**2 + c.imag**2)
    return tuple(float(np.sum(e[m])) for m in partition.masks(field.max_mode))


def damp(field, filt: DampingFilter):
    """Scale group ``i`` by ``f(i)``; wave states are damped in both components."""
    if isinstance(field, WaveState):
        return WaveState(damp(field.u, filt), damp(field.v, filt))
    scale = np.ones(field.coeffs.size)
    for mask, f in zip(filt.partition.masks(field.max_mode), filt.factors):
        scale[mask] = f
    return field.with_coeffs(field.coeffs * scale)
