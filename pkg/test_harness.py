#!/usr/bin/env python3
"""
Tests for configuration loading, the experiment runner, artifacts and the CLI.

Runs use tiny grids so the whole file stays fast.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent))

from sgrd.cli import cli
from sgrd.exceptions import ArtifactIOError, ConfigError, UsageError
from sgrd.forms import load_config, parse_pairs
from sgrd.models import HorizontalCurve
from sgrd.services import experiments
from sgrd.services.artifacts import (curve_frame, load_checkpoint, read_json, save_checkpoint,
                                     to_jsonable, write_json)
from sgrd.services.batch_runner import BatchJob, BatchRunner, run_jobs
from sgrd.services.experiments import (EXIT_BLOWUP, EXIT_CONFIG, EXIT_IO, EXIT_OK, SWEEP_COLUMNS,
                                       execute, materialize_sweep, resolve_runtime, run)

BASE = "alpha = 10\nkappa = 50\n"
TINY = BASE + "n_modes = 4\ndt = 0.01\n"


class BareSettings:
    SGRD_OUT_DIR = None
    SGRD_WORKERS = None
    SGRD_BURN_IN = None
    DEFAULT_OUT_DIR = 'runs'
    DEFAULT_WORKERS = 2
    DEFAULT_BURN_IN = 10.0


class EnvSettings(BareSettings):
    SGRD_OUT_DIR = 'env_out'
    SGRD_WORKERS = 3


def prepared(text, out_dir, kind=None, **flags):
    config = load_config(text, overrides={'kind': kind} if kind else None)
    return resolve_runtime(config, out=str(out_dir), settings=BareSettings, **flags)


def test_load_config_defaults():
    config = load_config(BASE)
    params = config.params
    assert config.kind == 'check-params'
    assert params.domain_length == pytest.approx(math.pi)
    assert params.n_modes == 32 and params.n_quad == 64
    assert params.dt == 1e-3
    assert params.delta is None
    assert params.m == 1
    assert params.h_coeffs[0, 0] == pytest.approx(0.1)
    assert not np.any(params.f_coeffs)
    assert config.seed == 0 and config.workers is None and config.burn_in is None
    print("✓ defaults applied")


def test_load_config_parses_lists_and_matrices():
    text = BASE + "# comment\n\nh_coeffs = 0.1, 0; 0, 0.2\nf_mean = 2\nt_ladder = 1, 2.5\ndelta = 0.5\n"
    config = load_config(text)
    assert config.params.m == 2
    assert config.params.h_coeffs[1, 1] == pytest.approx(0.2)
    assert config.params.f_coeffs[0] == pytest.approx(2 * math.sqrt(math.pi))
    assert config.t_ladder == [1.0, 2.5]
    assert config.params.delta == 0.5


def test_load_config_errors():
    with pytest.raises(ConfigError, match="duplicate key 'alpha'"):
        load_config(BASE + "alpha = 3\n")
    with pytest.raises(ConfigError, match="did you mean 'alpha'"):
        load_config("alpah = 10\nkappa = 50\n")
    with pytest.raises(ConfigError, match='kappa'):
        load_config("alpha = 10\n")
    with pytest.raises(ConfigError, match='delta'):
        load_config(BASE + "delta = 1.5\n")
    with pytest.raises(ConfigError, match='alpha'):
        load_config("alpha = -1\nkappa = 50\n")
    with pytest.raises(ConfigError):
        load_config(BASE + "just some words\n")
    with pytest.raises(ConfigError):
        load_config(BASE + "n_modes = 4\nf_coeffs = 1, 2, 3, 4, 5\n")
    with pytest.raises(ConfigError, match='sweep'):
        load_config(BASE, overrides={'kind': 'sweep'})
    print("✓ configuration errors reported")


def test_parse_pairs():
    pairs = parse_pairs("a = 1\n# skip\n b=2 # trailing\n")
    assert pairs['a'] == '1' and pairs['b'] == '2'


def test_resolve_runtime_precedence():
    config = load_config(BASE + "workers = 5\nout_dir = file_out\nburn_in = 2\n")
    env = resolve_runtime(config, settings=EnvSettings)
    assert env.workers == 3
    assert env.out_dir == 'env_out'
    assert env.burn_in == 2.0

    flags = resolve_runtime(config, seed=9, out='flag_out', workers=7, settings=EnvSettings)
    assert (flags.workers, flags.out_dir, flags.seed, flags.params.seed) == (7, 'flag_out', 9, 9)

    file_only = resolve_runtime(config, settings=BareSettings)
    assert (file_only.workers, file_only.out_dir) == (5, 'file_out')
    defaults = resolve_runtime(load_config(BASE), settings=BareSettings)
    assert (defaults.workers, defaults.burn_in) == (2, 10.0)
    with pytest.raises(ConfigError):
        resolve_runtime(config, workers=0, settings=BareSettings)
    print("✓ flag > env > file > default")


def test_materialize_sweep():
    config = load_config(BASE + "sweep_alpha = 2, 1, 4, 3\nsweep_kappa = 50, 10, 30, 20\nseed = 7\n")
    points = materialize_sweep(config)
    assert len(points) == 16
    assert [p[0] for p in points] == list(range(16))
    assert [(p[1], p[2]) for p in points] == sorted((p[1], p[2]) for p in points)
    assert points[0][1:3] == (1.0, 10.0)
    assert len({p[3] for p in points}) == 16
    assert materialize_sweep(config) == points
    with pytest.raises(UsageError):
        materialize_sweep(load_config(BASE))


def test_check_params_run(tmp_path):
    config = prepared(BASE, tmp_path / 'check')
    assert run(config) == EXIT_OK
    summary = json.loads((tmp_path / 'check' / 'summary.json').read_text())
    assert summary['a'] == pytest.approx(5.0)
    assert summary['regime_1d'] is True
    assert summary['ledger']['lambda1'] == pytest.approx(50.0)
    manifest = read_json(tmp_path / 'check' / 'manifest.json')
    assert manifest['config']['params']['alpha'] == 10
    assert manifest['grid']['n_quad'] == 64
    assert 'code_version' in manifest

    weak = prepared("alpha = 2\nkappa = 2\ndelta = 1\n", tmp_path / 'weak')
    assert run(weak) == EXIT_OK
    assert read_json(tmp_path / 'weak' / 'summary.json')['regime_1d'] is False
    print("✓ check-params writes manifest and summary")


def test_simulate_zero_horizon(tmp_path):
    config = prepared(TINY + "h_coeffs = 0\nt_end = 0\ninitial_mean = 1.5\n", tmp_path, kind='simulate')
    summary = execute(config)
    trajectory = pd.read_csv(tmp_path / 'trajectory.csv')
    assert len(trajectory) == 1
    assert trajectory['s_unreduced'][0] == pytest.approx(1.5)
    assert summary['n_records'] == 1
    assert summary['mean_velocity'] is None
    state, meta = load_checkpoint(tmp_path, 'final_state')
    assert state.shape == (2, 4)
    assert meta['t'] == 0.0


def test_simulate_reruns_are_byte_identical(tmp_path):
    text = TINY + "t_end = 0.5\nrecord_every = 5\nh_coeffs = 0.1, 0.05\n"
    for name in ('first', 'second'):
        assert run(prepared(text, tmp_path / name, kind='simulate')) == EXIT_OK
    for artifact in ('manifest.json', 'summary.json', 'trajectory.csv', 'final_state.bin', 'final_state.json'):
        assert (tmp_path / 'first' / artifact).read_bytes() == (tmp_path / 'second' / artifact).read_bytes()
    assert len(pd.read_csv(tmp_path / 'first' / 'trajectory.csv')) == 11
    print("✓ reruns byte-identical")


def test_exit_codes(tmp_path):
    ragged = prepared(TINY + "t_end = 0.015\n", tmp_path / 'ragged', kind='simulate')
    assert run(ragged) == EXIT_CONFIG

    blowup = prepared(TINY + "t_end = 0.1\ninitial_mean = inf\n", tmp_path / 'blowup', kind='simulate')
    assert run(blowup) == EXIT_BLOWUP

    (tmp_path / 'blocker').write_text('not a directory')
    blocked = prepared(BASE, tmp_path / 'blocker' / 'run')
    assert run(blocked) == EXIT_IO


def test_rotation_run(tmp_path):
    text = TINY + "h_coeffs = 0\nf_mean = 2\nrotation_T = 10\nn_realizations = 1\nn_ics = 3\nrecord_every = 50\n"
    assert run(prepared(text, tmp_path, kind='rotation', workers=1)) == EXIT_OK
    summary = read_json(tmp_path / 'summary.json')
    assert summary['order_violations'] == 0
    assert summary['ics_agree'] is True
    assert summary['overdamped_rotation'] == pytest.approx(math.sqrt(3) / 10)
    assert 'pendulum_oracle' in summary
    table = pd.read_csv(tmp_path / 'rotation.csv')
    assert list(table['key']) == ['r0/ic0', 'r0/ic1', 'r0/ic2']


def test_attractor_run(tmp_path):
    text = TINY + "t_ladder = 0.5, 0.25\nn_p = 8\nn_ics = 3\nn_validation = 2\ncurve_tol = 10\n"
    assert run(prepared(text, tmp_path, kind='attractor', workers=2)) == EXIT_OK
    summary = read_json(tmp_path / 'summary.json')
    assert summary['converged'] is True
    assert summary['pullback_T'] == 0.5
    ladder = pd.read_csv(tmp_path / 'ladder.csv')
    assert list(ladder['T']) == [0.25, 0.5]
    assert math.isnan(ladder['hausdorff_step'][0])
    curve = pd.read_csv(tmp_path / 'curve.csv')
    assert curve.shape == (8, 1 + 2 * 4 - 1)
    absorbing = pd.read_csv(tmp_path / 'absorbing.csv')
    assert len(absorbing) == 2 and 'transient_bound' in absorbing.columns


SWEEP = TINY + ("sweep_alpha = 10, 2\nsweep_kappa = 50\nt_ladder = 0.5\nn_p = 8\n"
                "rotation_T = 1\nn_realizations = 1\nn_ics = 2\n")


def test_sweep_is_worker_independent(tmp_path):
    assert run(prepared(SWEEP, tmp_path / 'one', kind='sweep', workers=1)) == EXIT_OK
    assert run(prepared(SWEEP, tmp_path / 'four', kind='sweep', workers=4)) == EXIT_OK
    first = (tmp_path / 'one' / 'phase_table.csv').read_bytes()
    assert first == (tmp_path / 'four' / 'phase_table.csv').read_bytes()

    table = pd.read_csv(tmp_path / 'one' / 'phase_table.csv')
    assert list(table.columns) == SWEEP_COLUMNS
    assert list(table['alpha']) == [2.0, 10.0]
    assert list(table['regime_1d']) == [False, True]
    assert table['error'].isna().all()
    print("✓ sweep table identical across worker counts")


def test_sweep_keeps_failed_rows(tmp_path, monkeypatch):
    real = experiments._sweep_point

    def flaky(config, alpha, kappa, seed):
        if alpha == 2.0:
            raise UsageError("no curve")
        return real(config, alpha, kappa, seed)

    monkeypatch.setattr(experiments, '_sweep_point', flaky)
    summary = execute(prepared(SWEEP, tmp_path, kind='sweep', workers=2))
    assert summary['n_points'] == 2 and summary['n_failed'] == 1
    table = pd.read_csv(tmp_path / 'phase_table.csv')
    assert table['error'][0] == 'UsageError: no curve'
    assert table['a'].isna()[0] and not table['a'].isna()[1]


def test_batch_runner_orders_and_collects():
    jobs = [BatchJob(f"job {i}", pow, (i, 2)) for i in range(6)]
    assert run_jobs(jobs, workers=3) == [0, 1, 4, 9, 16, 25]

    bad = jobs[:2] + [BatchJob('bad', math.sqrt, (-1.0,))]
    results = BatchRunner(2).run(bad, raise_errors=False)
    assert [r.status for r in results] == ['success', 'success', 'error']
    assert isinstance(results[2].exception, ValueError)
    with pytest.raises(ValueError):
        run_jobs(bad, workers=2)
    assert BatchRunner(2).run([]) == []


def test_json_artifacts(tmp_path):
    assert to_jsonable({'x': np.float64(np.nan), 'y': np.arange(2), 'z': np.bool_(True)}) == \
        {'x': None, 'y': [0, 1], 'z': True}
    path = write_json(tmp_path / 'nested' / 'out.json', {'b': math.inf, 'a': 1})
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert read_json(path) == {'a': 1, 'b': None}
    with pytest.raises(ArtifactIOError):
        read_json(tmp_path / 'missing.json')


def test_checkpoint_layout(tmp_path):
    state = np.arange(24, dtype=float).reshape(3, 2, 4)
    target = save_checkpoint(tmp_path, 'ck', state, {'t': 1.0})
    raw = np.frombuffer(target.read_bytes(), dtype='<f8')
    # coefficient-major: (u_0, v_0, u_1, v_1, ...)
    np.testing.assert_array_equal(raw[:4], [0.0, 4.0, 1.0, 5.0])
    loaded, meta = load_checkpoint(tmp_path, 'ck')
    np.testing.assert_array_equal(loaded, state)
    assert meta['state_shape'] == [3, 2, 4] and meta['t'] == 1.0


def test_curve_frame_columns():
    curve = HorizontalCurve(p_grid=np.array([0.0, 1.0]), phi_points=np.ones((2, 2, 3)))
    frame = curve_frame(curve)
    assert list(frame.columns) == ['p', 'u_1', 'u_2', 'v_0', 'v_1', 'v_2']


def test_cli(tmp_path):
    config_file = tmp_path / 'exp.cfg'
    config_file.write_text(BASE)
    runner = CliRunner()

    ok = runner.invoke(cli, ['check-params', '--config', str(config_file), '--out', str(tmp_path / 'out')])
    assert ok.exit_code == EXIT_OK
    assert read_json(tmp_path / 'out' / 'summary.json')['kind'] == 'check-params'

    seeded = runner.invoke(cli, ['check-params', '--config', str(config_file), '--seed', '11',
                                 '--out', str(tmp_path / 'seeded')])
    assert seeded.exit_code == EXIT_OK
    assert read_json(tmp_path / 'seeded' / 'manifest.json')['config']['seed'] == 11

    missing = runner.invoke(cli, ['simulate', '--config', str(tmp_path / 'nope.cfg'), '--out', str(tmp_path)])
    assert missing.exit_code == EXIT_IO

    broken = tmp_path / 'broken.cfg'
    broken.write_text("alpha = 10\n")
    assert runner.invoke(cli, ['simulate', '--config', str(broken)]).exit_code == EXIT_CONFIG

    assert runner.invoke(cli, ['sweep', '--config', str(config_file), '--workers', '0']).exit_code == 2
    assert runner.invoke(cli, ['--version']).exit_code == 0
    print("✓ CLI exit codes")


if __name__ == "__main__":
    test_load_config_defaults()
    test_resolve_runtime_precedence()
    test_materialize_sweep()
    test_batch_runner_orders_and_collects()
