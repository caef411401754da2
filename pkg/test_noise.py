#!/usr/bin/env python3
"""
Tests for Wiener paths, the OU field and the tempered-bound estimator.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sgrd.exceptions import ConfigError, DomainError, ShapeError, UsageError
from sgrd.models import NoiseHistory, OUState, Params
from sgrd.services.noise import (NoiseContext, assemble_z, estimate_tempered_bounds,
                                 load_increments, noise_context, ou_advance, ou_init_stationary,
                                 record_z_history, sample_path, save_increments, shift_path)
from sgrd.services.spectral import build_operator


def test_path_grid_is_pinned_at_zero():
    path = sample_path(1, -1.0, 1.0, 0.5, seed=4)
    assert path.n_steps == 4
    assert path.cum.shape == (1, 5)
    assert path.zero_index == 2
    assert path.cum[0, 2] == 0.0
    np.testing.assert_allclose(path.times, [-1.0, -0.5, 0.0, 0.5, 1.0])
    np.testing.assert_allclose(np.diff(path.cum, axis=1), path.increments, atol=1e-12)
    print("✓ omega(0) = 0 on the grid")


def test_path_is_deterministic_and_prefix_consistent():
    first = sample_path(2, -3.0, 2.0, 0.01, seed=9, realization_id=1)
    again = sample_path(2, -3.0, 2.0, 0.01, seed=9, realization_id=1)
    assert np.array_equal(first.increments, again.increments)

    longer = sample_path(2, -60.0, 50.0, 0.01, seed=9, realization_id=1)
    lo = longer.zero_index - first.zero_index
    np.testing.assert_array_equal(longer.increments[:, lo:lo + first.n_steps], first.increments)
    np.testing.assert_allclose(longer.cum[:, lo:lo + first.n_steps + 1], first.cum, atol=1e-12)

    other = sample_path(2, -3.0, 2.0, 0.01, seed=9, realization_id=2)
    assert not np.array_equal(first.increments, other.increments)
    print("✓ increments reproducible and window-independent")


def test_path_rejects_bad_windows():
    with pytest.raises(ConfigError):
        sample_path(1, 0.5, 1.0, 0.1)
    with pytest.raises(ConfigError):
        sample_path(1, -1.0, -0.5, 0.1)
    with pytest.raises(ConfigError):
        sample_path(1, -1.0, 1.0, 0.3)
    with pytest.raises(DomainError):
        sample_path(0, -1.0, 1.0, 0.1)


def test_brownian_variance():
    ends, starts = [], []
    for r in range(10000):
        path = sample_path(1, -1.0, 1.0, 0.25, seed=3, realization_id=r)
        starts.append(path.cum[0, 0])
        ends.append(path.cum[0, -1])
    assert np.var(ends) == pytest.approx(1.0, rel=0.05)
    assert np.var(starts) == pytest.approx(1.0, rel=0.05)


def test_shift_path_rebases():
    path = sample_path(1, -2.0, 2.0, 0.5, seed=1)
    shifted = shift_path(path, 2)
    assert shifted.zero_index == path.zero_index + 2
    assert shifted.cum[0, shifted.zero_index] == 0.0
    np.testing.assert_allclose(shifted.cum, path.cum - path.cum[:, path.zero_index + 2:path.zero_index + 3])
    assert shifted.t0 == pytest.approx(-3.0)
    with pytest.raises(ConfigError):
        shift_path(path, 5)


def test_increment_dump(tmp_path):
    path = sample_path(2, -1.0, 0.5, 0.25, seed=5)
    target = save_increments(path, tmp_path / 'omega.bin')
    assert target.stat().st_size == 32 + 8 * path.increments.size
    loaded = load_increments(target, seed=5)
    assert loaded.m == 2 and loaded.n_steps == path.n_steps and loaded.zero_index == path.zero_index
    np.testing.assert_array_equal(loaded.increments, path.increments)
    np.testing.assert_array_equal(loaded.cum, path.cum)


def test_stationary_initial_law():
    rng = np.random.default_rng(2024)
    z = ou_init_stationary(100000, rng).z
    assert abs(z.mean()) < 0.01
    assert z.var() == pytest.approx(0.5, rel=0.05)

    triples = ou_init_stationary(300000, rng).z.reshape(100000, 3)
    corr = np.corrcoef(triples, rowvar=False)
    assert np.max(np.abs(corr - np.eye(3))) < 0.02
    print("✓ stationary OU initial law N(0, 1/2)")


def test_ou_advance():
    state = ou_advance(OUState(z=np.array([1.0]), t=0.0), [0.0], math.log(2))
    assert state.z[0] == pytest.approx(0.5)
    assert state.t == pytest.approx(math.log(2))
    assert ou_advance(OUState(z=np.array([0.0]), t=0.0), [0.3], 0.1).z[0] == pytest.approx(0.3)
    with pytest.raises(DomainError):
        ou_advance(state, [0.0], 0.0)

    state = OUState(z=np.array([2.0, -1.0]), t=0.0)
    for _ in range(500):
        state = ou_advance(state, [0.0, 0.0], 0.01)
    np.testing.assert_allclose(state.z, np.array([2.0, -1.0]) * math.exp(-5.0), rtol=1e-12)


def test_ou_long_run_variance():
    rng = np.random.default_rng(17)
    dt = 1e-3
    state = ou_init_stationary(50000, rng)
    for _ in range(1000):
        state = ou_advance(state, rng.normal(0.0, math.sqrt(dt), size=50000), dt)
    assert state.z.var() == pytest.approx(0.5, rel=0.02)


def test_assemble_z():
    h = np.zeros((2, 4))
    h[0, 0] = 1.0
    h[1, 2] = 0.5
    assert np.all(assemble_z(OUState(z=np.zeros(2), t=0.0), h) == 0)
    np.testing.assert_allclose(assemble_z(np.array([2.0]), h[:1]), [2.0, 0, 0, 0])
    both = assemble_z(np.array([2.0, -4.0]), h)
    np.testing.assert_allclose(both, assemble_z(np.array([2.0]), h[:1]) + assemble_z(np.array([-4.0]), h[1:]))
    with pytest.raises(ShapeError):
        assemble_z(np.array([1.0, 2.0, 3.0]), h)


def test_context_cocycle_at_noise_level():
    params = Params(alpha=10, kappa=50, n_modes=8, dt=0.01, h_coeffs=[[0.1, 0.05]])
    ctx = noise_context(params, sample_path(1, -5.0, 5.0, 0.01, seed=8))
    shifted = ctx.shifted(100)
    for t in (-3.0, 0.0, 2.5):
        np.testing.assert_array_equal(shifted.field_at(shifted.index_of(t)), ctx.field_at(ctx.index_of(t + 1.0)))
    assert ctx.track.shape == (ctx.path.n_steps + 1, 1)
    with pytest.raises(ConfigError):
        ctx.index_of(6.0)
    with pytest.raises(ConfigError):
        ctx.index_of(0.005)
    print("✓ shifted context reuses the OU track")


def test_context_track_follows_ou_recursion():
    params = Params(alpha=10, kappa=50, n_modes=4, dt=0.01)
    ctx = noise_context(params, sample_path(1, 0.0, 1.0, 0.01, seed=2), burn_in=0.5)
    state = ctx.ou_state(0)
    for k in range(ctx.path.n_steps):
        state = ou_advance(state, ctx.path.increments[:, k], 0.01)
    np.testing.assert_allclose(state.z, ctx.track[-1], rtol=1e-10, atol=1e-12)


def test_noise_context_checks_grid():
    params = Params(alpha=10, kappa=50, n_modes=4, dt=0.01)
    with pytest.raises(ConfigError):
        noise_context(params, sample_path(1, 0.0, 1.0, 0.02))
    with pytest.raises(ShapeError):
        NoiseContext.from_path(sample_path(2, 0.0, 1.0, 0.01), params.h_coeffs)


def test_tempered_bounds():
    op = build_operator(Params(alpha=10, kappa=1, n_modes=3))
    c = np.array([0.0, 3.0, 4.0])
    times = np.linspace(-10.0, 0.0, 11)
    constant = NoiseHistory(times=times, fields=np.tile(c, (11, 1)))
    est = estimate_tempered_bounds(constant, op, 0.5)
    assert est.r == pytest.approx(5.0)
    assert est.r_prime == pytest.approx(math.sqrt(1 * 9 + 4 * 16))
    assert est.r_double_prime == pytest.approx(math.sqrt(1 * 9 + 16 * 16))

    single = NoiseHistory(times=np.array([0.0]), fields=c[None, :])
    assert estimate_tempered_bounds(single, op, 1.0).r == pytest.approx(5.0)

    with pytest.raises(UsageError):
        estimate_tempered_bounds(NoiseHistory(times=np.array([]), fields=np.zeros((0, 3))), op, 1.0)
    with pytest.raises(DomainError):
        estimate_tempered_bounds(constant, op, 0.0)
    print("✓ tempered bounds on constant histories")


def test_tempered_bounds_are_monotone():
    params = Params(alpha=10, kappa=50, n_modes=8, dt=0.01, h_coeffs=[[0.1, 0.2, 0.05]])
    op = build_operator(params)
    ctx = noise_context(params, sample_path(1, -20.0, 0.0, 0.01, seed=6))
    short = record_z_history(ctx, -10.0, 0.0)
    full = record_z_history(ctx, -20.0, 0.0)
    assert estimate_tempered_bounds(full, op, 0.5).r >= estimate_tempered_bounds(short, op, 0.5).r
    assert estimate_tempered_bounds(full, op, 0.1).r >= estimate_tempered_bounds(full, op, 0.5).r
    assert full.fields.shape == (2001, 8)
    sparse = record_z_history(ctx, -20.0, 0.0, every=7)
    assert sparse.times[-1] == 0.0


if __name__ == "__main__":
    test_path_grid_is_pinned_at_zero()
    test_path_is_deterministic_and_prefix_consistent()
    test_stationary_initial_law()
    test_context_cocycle_at_noise_level()
    test_tempered_bounds()
