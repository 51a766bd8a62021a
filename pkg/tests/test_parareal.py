import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_real_field
from stableparareal import parareal as P
from stableparareal.manifold import DampingFilter, group_energies, hamiltonian
from stableparareal.propagators import (
    BurgersProblem,
    ConfigurationError,
    ParabolicProblem,
    PropagatorSpec,
    WaveProblem,
    WaveState,
    advance,
)
from stableparareal.spectral import GroupPartition, init_power_law, init_sine, l2_norm


def diff(a, b):
    if isinstance(a, WaveState):
        return max(np.max(np.abs(a.u.coeffs - b.u.coeffs)), np.max(np.abs(a.v.coeffs - b.v.coeffs)))
    return np.max(np.abs(a.coeffs - b.coeffs))


def parabolic_run(n_windows=4, K=4, **kw):
    prob = ParabolicProblem(1e-3)
    sched = P.Schedule(0.1 * n_windows, n_windows)
    return P.PararealRun(sched, PropagatorSpec(prob, 0.05), PropagatorSpec(prob, 0.005),
                         init_power_law(16, 1.0, "parabolic"), iterations=K, **kw)


def burgers_run(variant="plain", K=3, n=16):
    prob = BurgersProblem(0.05)
    part = GroupPartition.split(n, [n // 2])
    damping = DampingFilter.from_rule(part, "two_group") if variant == "projected_damped" else None
    return P.PararealRun(P.Schedule(0.4, 4), PropagatorSpec(prob, 0.05), PropagatorSpec(prob, 0.005),
                         init_sine(n), variant, K, None if variant == "plain" else part, damping)


def wave_run(variant="plain", K=3):
    prob = WaveProblem(1.0)
    u = init_power_law(8, 2.0, "wave")
    part = GroupPartition.split(8, [4])
    return P.PararealRun(P.Schedule(2.0, 5), PropagatorSpec(prob, 0.1), PropagatorSpec(prob, 0.01),
                         WaveState(u, u * 0.0), variant, K, None if variant == "plain" else part)


def test_schedule():
    s = P.Schedule(2.0, 4)
    assert s.window == 0.5
    np.testing.assert_allclose(s.times, [0, 0.5, 1.0, 1.5, 2.0])
    assert s.bounds(2) == (1.0, 1.5)
    with pytest.raises(ConfigurationError):
        P.Schedule(1.0, 0)


@pytest.mark.parametrize("make", [parabolic_run, burgers_run, wave_run])
def test_exactness_after_n_windows_iterations(make):
    r = make()
    r = P.PararealRun(r.schedule, r.coarse, r.fine, r.initial, r.variant, r.schedule.n_windows,
                      r.partition, r.damping)
    tr = P.run(r)
    ref = P.fine_sequential(r.initial, r.schedule, r.fine)
    scale = max(np.max(np.abs(s.coeffs if not isinstance(s, WaveState) else s.u.coeffs)) for s in ref)
    for s, f in zip(tr.states[-1], ref):
        assert diff(s, f) <= 1e-12 * scale


def test_first_k_windows_are_fine_after_k_iterations():
    r = parabolic_run(n_windows=6, K=3)
    tr = P.run(r)
    ref = P.fine_sequential(r.initial, r.schedule, r.fine)
    for k in range(4):
        for n in range(k + 1):
            assert diff(tr.states[k][n], ref[n]) < 1e-14


def test_coarse_init_is_sequential_coarse():
    r = parabolic_run()
    states = P.coarse_init(r)
    u = r.initial
    for n in range(4):
        u = advance(u, *r.schedule.bounds(n), r.coarse)
        assert diff(states[n + 1], u) == 0.0


def test_public_iterate_matches_engine():
    r = burgers_run("projected_damped", K=2)
    tr = P.run(r)
    s0 = P.coarse_init(r)
    s1, g1 = P.iterate(r, s0, k=0)
    s2, _ = P.iterate(r, s1, g1, k=1)
    for a, b in zip(s2, tr.states[2]):
        assert diff(a, b) == 0.0


def test_workers_do_not_change_result():
    r = burgers_run("projected", K=2)
    a, b = P.run(r, workers=1), P.run(r, workers=3)
    for ra, rb in zip(a.states, b.states):
        for x, y in zip(ra, rb):
            assert diff(x, y) == 0.0


def test_run_validation():
    r = parabolic_run()
    with pytest.raises(ConfigurationError, match="valid variants"):
        P.PararealRun(r.schedule, r.coarse, r.fine, r.initial, "bogus")
    with pytest.raises(ConfigurationError):
        P.PararealRun(r.schedule, r.fine, r.coarse, r.initial)
    with pytest.raises(ConfigurationError):
        P.PararealRun(r.schedule, r.coarse, PropagatorSpec(BurgersProblem(1e-3), 0.005), r.initial)
    with pytest.raises(ConfigurationError):
        P.PararealRun(r.schedule, r.coarse, r.fine, r.initial, "projected")
    part = GroupPartition.trivial(16)
    with pytest.raises(ConfigurationError):
        P.PararealRun(r.schedule, r.coarse, r.fine, r.initial, "projected_damped", partition=part)
    with pytest.raises(ConfigurationError):
        P.PararealRun(P.Schedule(0.4, 3), r.coarse, r.fine, r.initial)
    with pytest.raises(ConfigurationError):
        P.PararealRun(r.schedule, PropagatorSpec(r.coarse.problem, 0.05, space_modes=20), r.fine, r.initial)


def test_wave_projected_keeps_group_energies():
    r = wave_run("projected", K=3)
    tr = P.run(r)
    target = group_energies(r.initial, 1.0, r.partition)
    for k, row in enumerate(tr.states):
        for n, s in enumerate(row):
            np.testing.assert_allclose(group_energies(s, 1.0, r.partition), target, rtol=1e-12)
            if n > 0:
                assert (k, n) in tr.lambdas
    assert not tr.projection_failed.any()


def test_wave_plain_drifts_in_energy():
    tr = P.run(wave_run("plain", K=2))
    h0 = hamiltonian(tr.run.initial, 1.0)
    dev = max(abs(hamiltonian(s, 1.0) - h0) / h0 for s in tr.states[1])
    assert dev > 1e-8


def test_burgers_norm_identity_inline():
    tr = P.run(burgers_run("projected_damped", K=3))
    nid = tr.norm_identity[1:, 1:]
    assert np.all(np.isfinite(nid))
    assert np.max(nid) < 1e-12
    assert np.all(np.isnan(tr.norm_identity[0]))
    assert (0, 1) not in tr.lambdas and (1, 1) in tr.lambdas


def test_divergence_is_flagged_not_raised():
    prob = BurgersProblem(1e-4)
    u = init_sine(8, 200.0)
    r = P.PararealRun(P.Schedule(0.4, 4), PropagatorSpec(prob, 0.1), PropagatorSpec(prob, 0.01), u,
                      iterations=1)
    tr = P.run(r)
    assert tr.diverged.any()
    bad = np.argwhere(tr.diverged)
    k, n = bad[0]
    assert not tr.states[k][n].is_finite()


def test_fine_sequential_raises_on_divergence():
    prob = BurgersProblem(1e-4)
    u = init_sine(8, 200.0)
    with pytest.raises(P.DivergenceError, match="window"):
        P.fine_sequential(u, P.Schedule(0.4, 4), PropagatorSpec(prob, 0.1))


@given(seed=st.integers(0, 2**31 - 1), nw=st.integers(1, 5))
def test_exactness_property_parabolic(seed, nw):
    u = random_real_field(np.random.default_rng(seed), 8, decay=1.0)
    prob = ParabolicProblem(0.01)
    sched = P.Schedule(0.1 * nw, nw)
    r = P.PararealRun(sched, PropagatorSpec(prob, 0.05), PropagatorSpec(prob, 0.01), u, iterations=nw)
    tr = P.run(r)
    ref = P.fine_sequential(u, sched, r.fine)
    for s, f in zip(tr.states[nw], ref):
        assert l2_norm(s - f) <= 1e-12 * l2_norm(u)


@given(seed=st.integers(0, 2**31 - 1))
def test_projected_norm_bound_property(seed):
    # With damping and projection the iterates never exceed the initial norm.
    rng = np.random.default_rng(seed)
    u = random_real_field(rng, 16, decay=2.0)
    u = u * (1.0 / l2_norm(u))
    prob = BurgersProblem(0.05)
    part = GroupPartition.split(16, [8])
    r = P.PararealRun(P.Schedule(0.4, 4), PropagatorSpec(prob, 0.05), PropagatorSpec(prob, 0.01), u,
                      "projected_damped", 2, part, DampingFilter.from_rule(part, "two_group"))
    tr = P.run(r)
    assert np.max(tr.norms) <= (1 + 1e-10) * l2_norm(u)
