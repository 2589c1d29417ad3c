#!/usr/bin/env python3
"""
Pipeline Job Tests

Checks job-file validation, artifact provenance and one run of every
pipeline stage against files written into a temporary directory.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to the path
sys.path.insert(0, str(Path(__file__).parent))

from gate_system.core.config_manager import ConfigManager, get_config_manager
from gate_system.core.exceptions import InputValidationError, PreconditionError
from gate_system.core.mode_model import load_mode_spec, save_mode_spec, two_ion_modes
from gate_system.core.pulse import PulseProgram, concatenate, load_pulse, mirror_pulse, save_pulse, uniform_fm_pulse
from gate_system.core.units import HALF_ANGLE, TARGET_ANGLE, TWO_PI
from gate_system.jobs.artifacts import build_meta, config_hash, read_csv, write_csv
from gate_system.jobs.job_config import JobConfig, load_job, parse_counts, parse_offsets
from gate_system.jobs.pipeline_job import PipelineJob
from gate_system.kernel.gate_kernel import IonPair, diagnostics
from gate_system.optimizer.robust_optimizer import calibrate_angle

OMEGA_COM = TWO_PI * 2.02e6
OMEGA_TILT = TWO_PI * 2.00e6
GATE_TIME = 200e-6
LOOP_RATE = TWO_PI * 5e3
PAIR = IonPair(0, 1)
CONFIG_PATH = str(Path(__file__).parent / "config" / "gate_config.json")


def create_config_manager() -> ConfigManager:
    ConfigManager.reset_instance()
    return get_config_manager(CONFIG_PATH)


def create_test_modes():
    return two_ion_modes(OMEGA_COM, OMEGA_TILT, 0.1)


def create_test_half() -> PulseProgram:
    seed = uniform_fm_pulse([OMEGA_COM - LOOP_RATE], GATE_TIME, TWO_PI * 20e3)
    return calibrate_angle(seed, create_test_modes(), PAIR, HALF_ANGLE)


def write_inputs(directory: Path) -> dict:
    """Mode spec, calibrated half and its mirror composite on disk."""
    modes_path = directory / "modes.json"
    half_path = directory / "half.json"
    gate_path = directory / "gate.json"
    save_mode_spec(create_test_modes(), modes_path)
    half = create_test_half()
    save_pulse(half, half_path)
    save_pulse(concatenate(half, mirror_pulse(half, OMEGA_COM, OMEGA_TILT)), gate_path)
    return {'modes': str(modes_path), 'half': str(half_path), 'gate': str(gate_path)}


def create_job(command: str, output_dir: Path, **values) -> JobConfig:
    data = {'command': command, 'output_dir': str(output_dir)}
    data.update(values)
    return JobConfig.from_dict(data)


def test_parse_offsets():
    """Ranges include both ends; comma lists pass through."""
    print("🧪 Testing offset parsing...")

    assert parse_offsets("-1000:500:1000") == [-1000.0, -500.0, 0.0, 500.0, 1000.0]
    assert parse_offsets("0, 250") == [0.0, 250.0]
    assert parse_offsets("7:1:7") == [7.0]
    assert len(parse_offsets("0:0.1:0.3")) == 4
    assert parse_offsets("100:-50:0") == [100.0, 50.0, 0.0]

    for bad in ("", "1:0:5", "5:1:0", "1:2", "a,b"):
        with pytest.raises(InputValidationError):
            parse_offsets(bad)

    print("✅ Offset parsing test completed!")


def test_parse_counts():
    assert parse_counts("1,5,9,13") == [1, 5, 9, 13]
    with pytest.raises(InputValidationError):
        parse_counts("0,1")
    with pytest.raises(InputValidationError):
        parse_counts("one")


def test_job_config_validation(tmp_path):
    """Missing inputs, unknown keys and bad parameter blocks are named."""
    print("🧪 Testing job validation...")

    with pytest.raises(InputValidationError):
        JobConfig.from_dict({'command': 'diagnose', 'modes_file': 'modes.json'})
    with pytest.raises(InputValidationError):
        JobConfig.from_dict({'command': 'launch'})
    with pytest.raises(InputValidationError):
        JobConfig.from_dict({'command': 'modes', 'leverage': 3})
    with pytest.raises(InputValidationError):
        JobConfig.from_dict({'command': 'diagnose', 'modes_file': 'm.json', 'pulse_file': 'p.json',
                             'pair': [1, 1]})

    with pytest.raises(InputValidationError) as excinfo:
        JobConfig.from_dict({'command': 'modes', 'params': {'kind': 'two_ion', 'com_freq_hz': 2e6}})
    assert excinfo.value.field.startswith("params")
    with pytest.raises(InputValidationError) as excinfo:
        JobConfig.from_dict({'command': 'scan', 'modes_file': 'm.json', 'pulse_file': 'p.json',
                             'params': {'repeats': 0, 'offsets_hz': [0.0]}})
    assert excinfo.value.field == "params.repeats"

    job = JobConfig.from_dict({'command': 'scan', 'modes_file': 'm.json', 'pulse_file': 'p.json',
                               'params': {'offsets_hz': '-100:100:100'}})
    assert job.block().offsets_hz == [-100.0, 0.0, 100.0]
    assert job.stem == 'scan'
    assert job.input_files() == ['m.json', 'p.json']
    with pytest.raises(InputValidationError):
        job.check_files()

    path = tmp_path / "job.json"
    path.write_text(json.dumps(job.to_dict()))
    assert load_job(path) == job
    path.write_text("[1, 2]")
    with pytest.raises(InputValidationError):
        load_job(path)
    with pytest.raises(InputValidationError):
        load_job(tmp_path / "missing.json")

    print("✅ Job validation test completed!")


def test_artifact_headers(tmp_path):
    """CSV artifacts lead with provenance comments and read back cleanly."""
    import pandas as pd

    config = {'command': 'scan', 'params': {'repeats': 1}}
    reordered = {'params': {'repeats': 1}, 'command': 'scan'}
    assert config_hash(config) == config_hash(reordered)
    assert len(config_hash(config)) == 64

    meta = build_meta(config, {'offset_hz': 'Hz'}, "detuning_scan")
    assert meta['tool'] == 'arobust'
    assert meta['version'] == '1.0.0'

    path = write_csv(pd.DataFrame({'offset_hz': [0.0, 1.5]}), tmp_path / "out" / "scan.csv", meta)
    lines = path.read_text().splitlines()
    assert lines[0] == "# tool: arobust"
    assert lines[2] == f"# config_sha256: {config_hash(config)}"
    assert lines[3] == "# units: offset_hz=Hz"
    assert lines[4] == "# kind: detuning_scan"
    assert np.allclose(read_csv(path)['offset_hz'], [0.0, 1.5])


def test_modes_job(tmp_path):
    manager = create_config_manager()
    job = create_job('modes', tmp_path, name='trap',
                     params={'kind': 'two_ion', 'com_freq_hz': 2.02e6, 'tilt_freq_hz': 2.0e6, 'eta': 0.1})
    result = PipelineJob(job, manager).run()

    path = result.artifacts['modes']
    assert path == tmp_path / "trap.json"
    data = json.loads(path.read_text())
    assert data['_meta']['kind'] == 'mode_spec'
    assert np.allclose(result.summary['mode_freqs_hz'], [2.02e6, 2.0e6])

    modes = load_mode_spec(path)
    assert np.allclose(modes.mode_freqs, [OMEGA_COM, OMEGA_TILT])


def test_diagnose_job(tmp_path):
    """Diagnostics JSON, flat CSV row and a trajectory ending at the final angle."""
    print("🧪 Testing diagnose job...")

    manager = create_config_manager()
    files = write_inputs(tmp_path)
    job = create_job('diagnose', tmp_path / "out", modes_file=files['modes'], pulse_file=files['gate'],
                     params={'max_order': 2, 'trajectory': 9})
    result = PipelineJob(job, manager).run()

    assert set(result.artifacts) == {'diagnostics', 'table', 'trajectory'}
    assert math.isclose(result.summary['theta'], TARGET_ANGLE, rel_tol=1e-9)

    payload = json.loads(result.artifacts['diagnostics'].read_text())
    assert payload['_meta']['config_sha256'] == config_hash(job.to_dict())
    assert len(payload['higher_dtheta']) == 1

    trajectory = read_csv(result.artifacts['trajectory'])
    assert len(trajectory) == 9
    assert {'time_s', 'theta', 'alpha_0_0_re', 'alpha_1_1_im'} <= set(trajectory.columns)
    assert math.isclose(trajectory['theta'].iloc[-1], TARGET_ANGLE, rel_tol=1e-8)
    assert trajectory['theta'].iloc[0] == 0.0

    print("✅ Diagnose job test completed!")


def test_scan_job(tmp_path):
    manager = create_config_manager()
    files = write_inputs(tmp_path)
    job = create_job('scan', tmp_path / "out", modes_file=files['modes'], pulse_file=files['gate'],
                     params={'offsets_hz': '-500:500:500', 'repeats': 5})
    result = PipelineJob(job, manager).run()

    frame = read_csv(result.artifacts['scan'])
    assert np.allclose(frame['offset_hz'], [-500.0, 0.0, 500.0])
    assert math.isclose(frame['fidelity'][1], 1.0, abs_tol=1e-9)
    assert result.summary['points'] == 3
    assert result.artifacts['scan'].read_text().startswith("# tool: arobust")


def test_ff_job(tmp_path):
    manager = create_config_manager()
    files = write_inputs(tmp_path)
    job = create_job('ff', tmp_path / "out", modes_file=files['modes'], pulse_file=files['gate'],
                     params={'f_min_hz': 10.0, 'f_max_hz': 1e4, 'num_points': 20,
                             'spectrum': {'kind': 'static', 'epsilon_hz': 100.0},
                             'slope_below_hz': 100.0})
    result = PipelineJob(job, manager).run()

    curve = read_csv(result.artifacts['curve'])
    assert len(curve) == 20
    assert list(curve.columns) == ['freq_hz', 'f_alpha', 'f_theta']
    assert 'spectral_error' in result.summary
    summary = json.loads(result.artifacts['summary'].read_text())
    assert summary['_meta']['kind'] == 'filter_function_summary'

    bad = create_job('ff', tmp_path / "bad", modes_file=files['modes'], pulse_file=files['gate'],
                     params={'f_min_hz': 1e4, 'f_max_hz': 10.0})
    with pytest.raises(InputValidationError):
        PipelineJob(bad, manager).run()
    assert not (tmp_path / "bad").exists()


def test_arobust_jobs(tmp_path):
    """A bare loop fails the robustness precondition; wrong seed counts fail validation."""
    print("🧪 Testing A-robust jobs...")

    manager = create_config_manager()
    files = write_inputs(tmp_path)

    mirror = create_job('arobust', tmp_path / "mirror", modes_file=files['modes'], pulse_file=files['half'],
                        params={'method': 'mirror'})
    with pytest.raises(PreconditionError):
        PipelineJob(mirror, manager).run()
    assert not (tmp_path / "mirror").exists()

    am = create_job('arobust', tmp_path / "am", modes_file=files['modes'], seed_pulses=[files['half']],
                    params={'method': 'am'})
    with pytest.raises(InputValidationError) as excinfo:
        PipelineJob(am, manager).run()
    assert excinfo.value.field == "seed_pulses"

    ratios = create_job('arobust', tmp_path / "am", modes_file=files['modes'],
                        seed_pulses=[files['half'], files['half']],
                        params={'method': 'am', 'ratios': [1.0]})
    with pytest.raises(InputValidationError):
        PipelineJob(ratios, manager).run()

    print("✅ A-robust job test completed!")


def test_simulate_jobs(tmp_path):
    """Single propagation and the repeated-gate fit."""
    print("🧪 Testing simulate jobs...")

    manager = create_config_manager()
    files = write_inputs(tmp_path)

    single = create_job('simulate', tmp_path / "out", modes_file=files['modes'], pulse_file=files['gate'],
                        params={'n_max': 10, 'offset_hz': 500.0})
    result = PipelineJob(single, manager).run()
    payload = json.loads(result.artifacts['result'].read_text())
    assert payload['path'] == 'factorized'
    assert np.array(payload['rho_re']).shape == (4, 4)
    assert payload['noise']['carrier_T2'] is None
    assert 0.9 < result.summary['fidelity'] < 1.0

    repeated = create_job('simulate', tmp_path / "out", name='sequence', modes_file=files['modes'],
                          pulse_file=files['gate'], params={'n_max': 10, 'counts': '1,5'})
    result = PipelineJob(repeated, manager).run()
    frame = read_csv(result.artifacts['fidelities'])
    assert list(frame['gate_count']) == [1, 5]
    assert np.allclose(frame['fidelity'], 1.0, atol=1e-6)
    assert abs(result.summary['gate_error']) < 1e-6

    print("✅ Simulate jobs test completed!")


def test_design_job(tmp_path):
    """A short design run writes a calibrated, symmetric pulse that reloads."""
    print("🧪 Testing design job...")

    manager = create_config_manager()
    files = write_inputs(tmp_path)
    optimizer = {
        'gate_time_s': GATE_TIME,
        'max_amplitude_hz': 2e5,
        'detuning_bounds_hz': [2.001e6, 2.019e6],
        'initial_guess_hz': 2.015e6,
        'num_segments': 8,
        'num_starts': 1,
        'max_iters': 100,
    }
    job = create_job('design', tmp_path / "out", modes_file=files['modes'],
                     params={'optimizer': optimizer, 'workers': 1})
    result = PipelineJob(job, manager).run()

    assert set(result.artifacts) == {'pulse', 'report', 'cost_history'}
    pulse = load_pulse(result.artifacts['pulse'])
    assert pulse.num_segments == 8
    diag = diagnostics(pulse, create_test_modes(), PAIR)
    assert math.isclose(diag.theta, HALF_ANGLE, rel_tol=1e-8)

    history = read_csv(result.artifacts['cost_history'])
    assert list(history.columns) == ['evaluation', 'cost']
    assert np.all(np.diff(history['cost'].to_numpy()) <= 0)

    missing = dict(optimizer)
    del missing['max_amplitude_hz']
    with pytest.raises(InputValidationError):
        PipelineJob(create_job('design', tmp_path / "out", modes_file=files['modes'],
                               params={'optimizer': missing}), manager).run()

    print("✅ Design job test completed!")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
