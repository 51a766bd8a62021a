import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_real_field
from stableparareal.manifold import (
    DampingFilter,
    DegenerateStateError,
    EnergyTargets,
    ProjectionError,
    _wave_group_quadratic,
    bisect_root,
    burgers_group_targets,
    damp,
    group_energies,
    group_norms_sq,
    hamiltonian,
    mode_energy,
    newton_root,
    project_norm_groups,
    project_wave_groups,
    smallest_root,
)
from stableparareal.propagators import WaveState
from stableparareal.spectral import (
    GroupPartition,
    SpectralField,
    field_to_samples,
    l2_norm,
    l2_norm_sq,
    spatial_derivative,
)


def wave_state(rng, n, period=2.0 * np.pi, decay=1.0):
    return WaveState(random_real_field(rng, n, period, decay), random_real_field(rng, n, period, decay))


def test_hamiltonian_against_quadrature(rng):
    period, c = 7.0, 1.7
    s = wave_state(rng, 10, period)
    m = 2048
    ut = field_to_samples(s.v, m)
    ux = field_to_samples(spatial_derivative(s.u), m)
    quad = (np.sum(ut**2) + c * c * np.sum(ux**2)) * period / m
    assert hamiltonian(s, c) == pytest.approx(quad, rel=1e-10)


def test_group_energies_sum_to_hamiltonian(rng):
    s = wave_state(rng, 12)
    part = GroupPartition.split(12, [4, 9])
    assert sum(group_energies(s, 0.8, part)) == pytest.approx(hamiltonian(s, 0.8), rel=1e-14)


def test_mode_energy_formula():
    assert mode_energy(1.0, 0.0, 2, 3.0, 2.0 * np.pi) == pytest.approx(36.0)
    assert mode_energy(0.0, 2j, 5, 1.0, 1.0) == pytest.approx(4.0)


def test_smallest_root_cases():
    assert smallest_root(1.0, -1.5, 2.0) == pytest.approx(1.0)  # roots 1, 2
    assert smallest_root(1.0, 1.5, 2.0) == pytest.approx(-1.0)
    assert smallest_root(0.0, 1.0, -4.0) == pytest.approx(2.0)
    assert smallest_root(3.0, 1.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        smallest_root(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        smallest_root(0.0, 0.0, 1.0)


def test_smallest_root_is_stable_for_tiny_constant():
    # Naive formula loses every digit here.
    a, b, c = 1.0, -1e8, 1e-8
    assert smallest_root(a, b, c) == pytest.approx(5e-17, rel=1e-14)


def plain_bisection(phi, lo, hi):
    flo = phi(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sign(phi(mid)) == np.sign(flo):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nearest_root_by_bisection(a, b, c):
    """Bracket the root nearest 0: it lies between 0 and the vertex when both roots
    share a sign, otherwise between 0 and a point beyond the far side."""
    phi = lambda x: a * x * x + 2 * b * x + c
    vertex = -b / a
    if c * a > 0:
        return plain_bisection(phi, 0.0, vertex)
    big = 2.0 * (abs(b) + np.sqrt(abs(a * c))) / a + 1.0
    lo = plain_bisection(phi, -big, 0.0)
    hi = plain_bisection(phi, 0.0, big)
    return lo if abs(lo) < abs(hi) else hi


def test_quadratic_multiplier_matches_bisection(rng):
    checked = 0
    while checked < 1000:
        a = rng.uniform(0.1, 10.0)
        b = rng.uniform(-5.0, 5.0)
        c = rng.uniform(-1.0, 1.0)
        if b * b - a * c <= 0:
            continue
        lam = smallest_root(a, b, c)
        ref = nearest_root_by_bisection(a, b, c)
        assert abs(lam - ref) <= 1e-12 * max(1.0, abs(ref))
        checked += 1


def test_library_bisection_finds_nearest_root(rng):
    for _ in range(200):
        a, b, c = rng.uniform(0.1, 10.0), rng.uniform(-5.0, 5.0), rng.uniform(-1.0, 1.0)
        if b * b - a * c < 1e-3:
            continue
        got = bisect_root(lambda x: a * x * x + 2 * b * x + c, 0.0, rtol=1e-14)
        assert got == pytest.approx(smallest_root(a, b, c), rel=1e-10, abs=1e-14)


def test_newton_matches_quadratic(rng):
    for _ in range(100):
        a, b, c = rng.uniform(0.5, 2.0), rng.uniform(-2, 2), rng.uniform(-0.3, 0.3)
        if b * b - a * c <= 0:
            continue
        lam = newton_root(lambda x: a * x * x + 2 * b * x + c, lambda x: 2 * a * x + 2 * b)
        assert lam == pytest.approx(smallest_root(a, b, c), rel=1e-10, abs=1e-14)


def test_newton_falls_back_to_bisection():
    # Zero derivative at the start point.
    root = newton_root(lambda x: x * x * x - 8.0, lambda x: 3 * x * x, x0=0.0)
    assert root == pytest.approx(2.0, rel=1e-10)


def test_wave_quadratic_coefficients_against_evaluation(rng):
    s = wave_state(rng, 8)
    c = 1.4
    part = GroupPartition.split(8, [3])
    mask = part.mask(2, 8)
    a, b, c0, gu, gv = _wave_group_quadratic(s, c, mask)
    for lam in (-0.3, 0.1, 0.7):
        u = s.u.coeffs.copy()
        v = s.v.coeffs.copy()
        u[mask] += lam * gu
        v[mask] += lam * gv
        moved = WaveState(s.u.with_coeffs(u), s.v.with_coeffs(v))
        assert group_energies(moved, c, part)[1] == pytest.approx(a * lam**2 + 2 * b * lam + c0, rel=1e-12)


@pytest.mark.parametrize("method", ["quadratic", "newton"])
def test_wave_projection_restores_group_energies(rng, method):
    s0 = wave_state(rng, 16)
    c = 1.0
    part = GroupPartition.split(16, [5, 11])
    targets = EnergyTargets(part, group_energies(s0, c, part))
    perturbed = s0 + wave_state(rng, 16) * 0.01
    proj = project_wave_groups(perturbed, c, targets, method=method)
    np.testing.assert_allclose(group_energies(proj.state, c, part), targets.targets, rtol=1e-12)
    assert proj.fallback == ()
    assert all(abs(lam) < 0.1 for lam in proj.lambdas)


def test_wave_projection_fallback_rescales(rng):
    # Energy sits in u; the gradient ray's minimum lies above a tiny target.
    u = random_real_field(rng, 4)
    s = WaveState(u, random_real_field(rng, 4) * 1e-3)
    part = GroupPartition.trivial(4)
    c0 = hamiltonian(s, 10.0)
    a, b, cc, _, _ = _wave_group_quadratic(s, 10.0, part.mask(1, 4))
    target = 0.5 * (cc - b * b / a)
    if not target < cc - b * b / a:
        pytest.skip("ray reaches target")
    targets = EnergyTargets(part, (target,))
    with pytest.raises(ProjectionError):
        project_wave_groups(s, 10.0, targets, fallback=False)
    proj = project_wave_groups(s, 10.0, targets)
    assert proj.fallback == (1,)
    assert hamiltonian(proj.state, 10.0) == pytest.approx(target, rel=1e-12)
    assert c0 > target


def test_wave_projection_zero_group():
    z = WaveState.zeros(4, 1.0)
    part = GroupPartition.trivial(4)
    assert project_wave_groups(z, 1.0, EnergyTargets(part, (0.0,))).lambdas == (0.0,)
    with pytest.raises(ProjectionError):
        project_wave_groups(z, 1.0, EnergyTargets(part, (1.0,)))


def test_energy_targets_validation():
    part = GroupPartition.trivial(3)
    with pytest.raises(ValueError):
        EnergyTargets(part, (1.0, 2.0))
    with pytest.raises(ValueError):
        EnergyTargets(part, (-1.0,))


def test_damping_rules():
    part = GroupPartition((0, 2, 4, 6))
    assert DampingFilter.from_rule(part).factors == pytest.approx((1.0, 0.2, 0.1))
    assert DampingFilter.from_rule(part, "two_group").factors == pytest.approx((1.0, 1 / 7, 0.1))
    with pytest.raises(ValueError):
        DampingFilter.from_rule(part, "strong")
    with pytest.raises(ValueError):
        DampingFilter(part, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        DampingFilter(part, (1.0, 0.0, 0.5))


def test_damp_scales_groups(rng):
    u = random_real_field(rng, 5)
    part = GroupPartition.split(5, [3])
    out = damp(u, DampingFilter(part, (1.0, 0.25)))
    high = np.abs(u.modes) >= 3
    np.testing.assert_allclose(out.coeffs[high], 0.25 * u.coeffs[high])
    np.testing.assert_allclose(out.coeffs[~high], u.coeffs[~high])
    w = damp(WaveState(u, u), DampingFilter(part, (1.0, 0.25)))
    np.testing.assert_allclose(w.v.coeffs, out.coeffs)
    ident = damp(u, DampingFilter.identity(part))
    np.testing.assert_array_equal(ident.coeffs, u.coeffs)


def test_burgers_targets_and_norm_identity(rng):
    part = GroupPartition.split(10, [5])
    prev_k = random_real_field(rng, 10)
    fine = random_real_field(rng, 10)
    prev_kp1 = random_real_field(rng, 10)
    targets = burgers_group_targets(prev_k, fine, prev_kp1, part)
    trial = random_real_field(rng, 10)
    proj = project_norm_groups(trial, targets)
    np.testing.assert_allclose(group_norms_sq(proj.state, part), targets.targets, rtol=1e-13)
    expected = l2_norm(fine) / l2_norm(prev_k) * l2_norm(prev_kp1)
    assert l2_norm(proj.state) == pytest.approx(expected, rel=1e-13)
    with pytest.raises(DegenerateStateError):
        burgers_group_targets(SpectralField.zeros(10, prev_k.period), fine, prev_kp1, part)


def test_norm_projection_multiplier_is_half_scale_minus_one():
    u = SpectralField.from_modes(2, 1.0, {1: 1.0, -1: 1.0})
    part = GroupPartition.trivial(2)
    proj = project_norm_groups(u, EnergyTargets(part, (4.0 * l2_norm_sq(u),)))
    assert proj.lambdas == (pytest.approx(0.5),)


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 20), data=st.data())
def test_wave_projection_property(seed, n, data):
    rng = np.random.default_rng(seed)
    cut = data.draw(st.integers(1, n))
    eps = data.draw(st.floats(0.0, 0.05))
    c = data.draw(st.floats(0.1, 5.0))
    part = GroupPartition.split(n, [cut])
    s0 = wave_state(rng, n)
    targets = EnergyTargets(part, group_energies(s0, c, part))
    pert = s0 + wave_state(rng, n) * eps
    proj = project_wave_groups(pert, c, targets)
    np.testing.assert_allclose(group_energies(proj.state, c, part), targets.targets, rtol=1e-11)
    assert hamiltonian(proj.state, c) == pytest.approx(hamiltonian(s0, c), rel=1e-11)


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 20), s=st.floats(0.1, 10.0))
def test_norm_projection_is_idempotent(seed, n, s):
    u = random_real_field(np.random.default_rng(seed), n)
    part = GroupPartition.trivial(n)
    targets = EnergyTargets(part, (s * l2_norm_sq(u),))
    once = project_norm_groups(u, targets).state
    twice = project_norm_groups(once, targets)
    np.testing.assert_allclose(twice.state.coeffs, once.coeffs, rtol=1e-13, atol=1e-15)
    assert abs(twice.lambdas[0]) < 1e-13
