#!/usr/bin/env python3
"""
A-Robust Gate Design CLI
Command-line front end for the pulse design pipeline: mode specs, robust FM
design, A-robust composites, diagnostics, detuning scans, filter functions
and master-equation simulation. Each command writes inspectable artifacts.
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import click
import numpy as np
from loguru import logger

from . import __version__
from .core.config_manager import ConfigManager, get_config_manager
from .core.exceptions import GateSystemError, InputValidationError
from .core.units import HALF_ANGLE, TARGET_ANGLE
from .jobs.job_config import COMMANDS, JobConfig, load_job, parse_counts
from .jobs.pipeline_job import JobResult, PipelineJob

DEFAULT_CONFIG = 'config/gate_config.json'


# Auto-completion functions
def get_methods(ctx, args, incomplete):
    """Auto-complete for A-robust construction methods."""
    methods = ['mirror', 'am', 'nth']
    return [m for m in methods if m.startswith(incomplete.lower())]


def get_config_sections(ctx, args, incomplete):
    """Auto-complete for configuration sections."""
    sections = ['kernel', 'optimizer', 'arobust', 'filter_function', 'simulation', 'output']
    return [s for s in sections if incomplete.lower() in s.lower()]


def get_targets(ctx, args, incomplete):
    """Auto-complete for target angles."""
    targets = ['half', 'full']
    return [t for t in targets if t.startswith(incomplete.lower())]


def _float_list(text: Optional[str], field: str) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InputValidationError(f"cannot parse {text!r}: {e}", field=field) from e


def _pair(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError as e:
        raise InputValidationError(f"cannot parse {text!r}: {e}", field="pair") from e
    if len(values) != 2:
        raise InputValidationError("expected two ion indices, e.g. 0,1", field="pair")
    return values


def _json_file(path: Optional[str], field: str) -> Optional[Dict[str, Any]]:
    if path is None:
        return None
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise InputValidationError(f"file not found: {path}", field=field) from e
    except json.JSONDecodeError as e:
        raise InputValidationError(f"invalid JSON in {path}: {e}", field=field) from e
    if not isinstance(data, dict):
        raise InputValidationError("expected a JSON object", field=field)
    return {k: v for k, v in data.items() if k != '_meta'}


def _configure_logging(verbose: bool, log_file: Optional[str]) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING")
    if log_file:
        logger.add(log_file, level="DEBUG", rotation="10 MB", retention=5)


def _fail(ctx: click.Context, error: Exception) -> NoReturn:
    """Print the one-line reason and exit with the error's status."""
    if isinstance(error, GateSystemError):
        if error.kind == "numerical":
            logger.error(error.one_line())
        click.echo(f"❌ {error.one_line()}", err=True)
        code = error.exit_code
    elif isinstance(error, (np.linalg.LinAlgError, FloatingPointError, ArithmeticError)):
        message = " ".join(str(error).split())
        logger.error(f"Numerical failure: {message}")
        click.echo(f"❌ kind=numerical reason={message}", err=True)
        code = 4
    else:
        message = " ".join(str(error).split())
        click.echo(f"❌ kind=error reason={type(error).__name__}: {message}", err=True)
        code = 1
    if ctx.obj and ctx.obj.get('verbose') and not isinstance(error, GateSystemError):
        import traceback
        click.echo(traceback.format_exc(), err=True)
    sys.exit(code)


def _output_dir(output: Optional[str]) -> str:
    return output or get_config_manager().get_output_settings().output_directory


def _run(ctx: click.Context, job_data: Dict[str, Any]) -> JobResult:
    """Validate a job, run it and print what it wrote."""
    try:
        job = JobConfig.from_dict(job_data)
        result = PipelineJob(job, get_config_manager()).run()
    except Exception as e:
        _fail(ctx, e)
    _display_result(result)
    return result


def _display_result(result: JobResult) -> None:
    click.echo(f"\n📋 {result.command} summary")
    click.echo("=" * 60)
    for key, value in result.summary.items():
        if isinstance(value, float):
            click.echo(f"   {key:<22} {value:.6e}")
        elif isinstance(value, dict):
            click.echo(f"   {key:<22} {json.dumps(value, default=str)}")
        else:
            click.echo(f"   {key:<22} {value}")
    for label, path in result.artifacts.items():
        click.echo(f"💾 {label}: {path}")
    if result.summary.get('converged') is False:
        click.echo("⚠️  Optimizer did not converge: the pulse misses the displacement or robustness tolerance")
        click.echo(f"⚠️  {result.command} completed without convergence")
        return
    click.echo(f"✅ {result.command} completed successfully!")


def _common_job(command: str, output: Optional[str], name: Optional[str], modes: Optional[str] = None,
                pulse: Optional[str] = None, pair: str = "0,1") -> Dict[str, Any]:
    job: Dict[str, Any] = {
        'command': command,
        'output_dir': _output_dir(output),
        'name': name,
        'pair': _pair(pair),
    }
    if modes:
        job['modes_file'] = modes
    if pulse:
        job['pulse_file'] = pulse
    return job


output_option = click.option('--output', '-o', type=click.Path(file_okay=False),
                             help='Output directory (default: output.output_directory)')
name_option = click.option('--name', '-n', help='File stem for the artifacts (default: command name)')
modes_option = click.option('--modes', '-m', required=True, type=click.Path(dir_okay=False),
                            help='Mode spec JSON')
pulse_option = click.option('--pulse', '-p', required=True, type=click.Path(dir_okay=False),
                            help='Pulse JSON')
pair_option = click.option('--pair', default='0,1', show_default=True, help='Target ions, e.g. 0,1')


@click.group()
@click.version_option(version=__version__, prog_name="arobust")
@click.option('--config', '-c', default=DEFAULT_CONFIG, help='Path to configuration file')
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose output')
@click.option('--log-file', type=click.Path(dir_okay=False), help='Also log to this file (rotating)')
@click.pass_context
def cli(ctx, config, verbose, log_file):
    """
    ⚛️ A-Robust Gate Design CLI

    Design frequency-modulated Molmer-Sorensen pulses that are robust to
    mode-frequency drift, build amplitude-weighted composites that also cancel
    the first-order rotation-angle error, and predict their measured behavior.

    Examples:
        arobust modes --com-hz 2.0e6 --tilt-hz 1.99e6 --eta 0.1 -o run
        arobust design -m run/modes.json --gate-time 200e-6 --max-amplitude-hz 2e5 \\
                       --bounds-hz 1.95e6,2.05e6 -o run
        arobust arobust -m run/modes.json -p run/design_pulse.json -o run
        arobust scan -m run/modes.json -p run/arobust_pulse.json --offsets -1000:100:1000 --repeats 5
        arobust config show
    """
    ctx.ensure_object(dict)
    ctx.obj['config'] = config
    ctx.obj['verbose'] = verbose
    _configure_logging(verbose, log_file)
    ConfigManager.reset_instance()
    get_config_manager(config)


@cli.command('modes')
@click.option('--com-hz', type=float, help='Center-of-mass mode frequency (two-ion)')
@click.option('--tilt-hz', type=float, help='Tilt mode frequency (two-ion)')
@click.option('--eta', type=float, default=0.1, show_default=True,
              help='Lamb-Dicke parameter (of the COM mode for chains)')
@click.option('--chain', type=int, help='Compute the radial modes of an N-ion chain instead')
@click.option('--axial-hz', type=float, help='Axial trap frequency (chain)')
@click.option('--radial-hz', type=float, help='Radial trap frequency (chain)')
@click.option('--drift-ratios', help='Per-mode drift ratios, e.g. 1,0.98')
@output_option
@name_option
@click.pass_context
def modes(ctx, com_hz, tilt_hz, eta, chain, axial_hz, radial_hz, drift_ratios, output, name):
    """
    Write a mode spec (frequencies, couplings, Lamb-Dicke parameters).

    Examples:
        arobust modes --com-hz 2.0e6 --tilt-hz 1.99e6 --eta 0.1
        arobust modes --chain 5 --axial-hz 3e5 --radial-hz 2e6 --eta 0.1
    """
    click.echo("🔍 Building mode spec...")
    try:
        params: Dict[str, Any] = {'eta': eta, 'drift_ratios': _float_list(drift_ratios, "drift_ratios")}
        if chain:
            params.update(kind='chain', num_ions=chain, axial_freq_hz=axial_hz, radial_freq_hz=radial_hz)
        else:
            params.update(kind='two_ion', com_freq_hz=com_hz, tilt_freq_hz=tilt_hz)
        job = _common_job('modes', output, name)
        job['params'] = params
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('design')
@modes_option
@pair_option
@click.option('--gate-time', type=float, required=True, help='Pulse duration in seconds')
@click.option('--max-amplitude-hz', type=float, required=True, help='Maximum Rabi frequency (Hz)')
@click.option('--bounds-hz', required=True, help='Detuning bounds low,high (Hz)')
@click.option('--segments', type=int, help='Number of equal segments (even)')
@click.option('--target', shell_complete=get_targets, type=click.Choice(['half', 'full']),
              default='half', show_default=True, help='XX(pi/8) half or full XX(pi/4)')
@click.option('--guess-hz', type=float, help='Center detuning for the first start (Hz)')
@click.option('--ff-suppress', 'ff_suppress', type=float, help='Also suppress F_alpha at +-F0_HZ')
@click.option('--seed', type=int, default=0, show_default=True, help='Random seed for multi-start')
@click.option('--starts', type=int, help='Number of optimizer starts')
@click.option('--workers', type=int, help='Parallel optimizer starts')
@click.option('--non-robust', is_flag=True, help='Drop the average-displacement (robustness) term')
@output_option
@name_option
@click.pass_context
def design(ctx, modes, pair, gate_time, max_amplitude_hz, bounds_hz, segments, target, guess_hz,
           ff_suppress, seed, starts, workers, non_robust, output, name):
    """
    Optimize a robust, time-symmetric FM pulse.

    Examples:
        arobust design -m modes.json --gate-time 200e-6 --max-amplitude-hz 2e5 --bounds-hz 1.95e6,2.05e6
        arobust design -m modes.json --gate-time 200e-6 --max-amplitude-hz 2e5 \\
                       --bounds-hz 1.95e6,2.05e6 --ff-suppress 5000
    """
    click.echo("🔍 Starting robust FM optimization...")
    try:
        optimizer: Dict[str, Any] = {
            'gate_time_s': gate_time,
            'max_amplitude_hz': max_amplitude_hz,
            'detuning_bounds_hz': _float_list(bounds_hz, "bounds_hz"),
            'target_angle': HALF_ANGLE if target == 'half' else TARGET_ANGLE,
            'seed': seed,
            'robust': not non_robust,
        }
        if segments is not None:
            optimizer['num_segments'] = segments
        if starts is not None:
            optimizer['num_starts'] = starts
        if guess_hz is not None:
            optimizer['initial_guess_hz'] = guess_hz
        if ff_suppress is not None:
            optimizer['ff_suppression'] = {'freq_hz': ff_suppress}
        job = _common_job('design', output, name, modes=modes, pair=pair)
        job['params'] = {'optimizer': optimizer, 'workers': workers}
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('arobust')
@modes_option
@pair_option
@click.option('--pulse', '-p', type=click.Path(dir_okay=False), help='Robust pi/8 half (mirror method)')
@click.option('--method', shell_complete=get_methods, type=click.Choice(['mirror', 'am', 'nth']),
              default='mirror', show_default=True, help='Composite construction')
@click.option('--seed-pulse', 'seed_pulses', multiple=True, type=click.Path(dir_okay=False),
              help='Robust seed pulse (repeat for am/nth)')
@click.option('--order', type=int, default=1, show_default=True, help='Highest cancelled order (nth)')
@click.option('--ratios', help='Per-mode drift ratios r_k, e.g. 1,1.02')
@output_option
@name_option
@click.pass_context
def arobust(ctx, modes, pair, pulse, method, seed_pulses, order, ratios, output, name):
    """
    Build an A-robust composite from robust seed pulses.

    Examples:
        arobust arobust -m modes.json -p half.json
        arobust arobust -m modes.json --method am --seed-pulse a.json --seed-pulse b.json
        arobust arobust -m modes.json --method nth --order 2 \\
                        --seed-pulse a.json --seed-pulse b.json --seed-pulse c.json
    """
    click.echo(f"🔧 Building A-robust composite ({method})...")
    try:
        job = _common_job('arobust', output, name, modes=modes, pulse=pulse, pair=pair)
        job['seed_pulses'] = list(seed_pulses)
        job['params'] = {'method': method, 'order': order, 'ratios': _float_list(ratios, "ratios")}
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('diagnose')
@modes_option
@pulse_option
@pair_option
@click.option('--max-order', type=int, default=1, show_default=True,
              help='Highest weighted angle derivative to report')
@click.option('--target-angle', type=float, help='Target angle in rad (default pi/4)')
@click.option('--trajectory', type=int, default=0, help='Also write N-point alpha(t)/Theta(t) samples')
@output_option
@name_option
@click.pass_context
def diagnose(ctx, modes, pulse, pair, max_order, target_angle, trajectory, output, name):
    """
    Report displacements, angle and drift responses of a pulse.

    Examples:
        arobust diagnose -m modes.json -p pulse.json
        arobust diagnose -m modes.json -p pulse.json --max-order 3 --trajectory 400
    """
    click.echo("🔍 Evaluating gate diagnostics...")
    try:
        job = _common_job('diagnose', output, name, modes=modes, pulse=pulse, pair=pair)
        job['params'] = {'max_order': max_order, 'target_angle': target_angle, 'trajectory': trajectory}
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('scan')
@modes_option
@pulse_option
@pair_option
@click.option('--offsets', required=True, help='Offsets in Hz: start:step:stop or a comma list')
@click.option('--repeats', type=int, default=1, show_default=True, help='Back-to-back gates per point')
@click.option('--noise', type=click.Path(dir_okay=False), help='Noise model JSON (master equation)')
@click.option('--n-max', type=int, help='Fock truncation per mode')
@output_option
@name_option
@click.pass_context
def scan(ctx, modes, pulse, pair, offsets, repeats, noise, n_max, output, name):
    """
    Scan populations, contrast and fidelity over detuning offsets.

    Examples:
        arobust scan -m modes.json -p pulse.json --offsets -1000:100:1000 --repeats 5
        arobust scan -m modes.json -p pulse.json --offsets 0,500 --noise noise.json --n-max 8
    """
    click.echo("📊 Running detuning scan...")
    try:
        job = _common_job('scan', output, name, modes=modes, pulse=pulse, pair=pair)
        job['params'] = {
            'offsets_hz': offsets,
            'repeats': repeats,
            'noise': _json_file(noise, "noise"),
            'n_max': n_max,
        }
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('ff')
@modes_option
@pulse_option
@pair_option
@click.option('--f-min', type=float, help='Lowest frequency (Hz)')
@click.option('--f-max', type=float, help='Highest frequency (Hz)')
@click.option('--points', type=int, help='Number of log-spaced frequencies')
@click.option('--spectrum', type=click.Path(dir_okay=False), help='Noise spectrum JSON for the error integral')
@click.option('--slope-below', type=float, default=1.0e3, show_default=True,
              help='Fit the low-frequency slope below this frequency (Hz)')
@output_option
@name_option
@click.pass_context
def ff(ctx, modes, pulse, pair, f_min, f_max, points, spectrum, slope_below, output, name):
    """
    Compute the displacement and angle filter functions.

    Examples:
        arobust ff -m modes.json -p pulse.json
        arobust ff -m modes.json -p pulse.json --spectrum one_over_f.json
    """
    click.echo("📈 Computing filter functions...")
    try:
        job = _common_job('ff', output, name, modes=modes, pulse=pulse, pair=pair)
        job['params'] = {
            'f_min_hz': f_min,
            'f_max_hz': f_max,
            'num_points': points,
            'spectrum': _json_file(spectrum, "spectrum"),
            'slope_below_hz': slope_below,
        }
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('simulate')
@modes_option
@pulse_option
@pair_option
@click.option('--noise', type=click.Path(dir_okay=False), help='Noise model JSON')
@click.option('--typical-noise', is_flag=True,
              help='10 q/s COM and 1 q/s heating, 3 ms motional and 330 ms carrier T2')
@click.option('--counts', help='Gate counts for the repeated-gate fit, e.g. 1,5,9,13')
@click.option('--offset-hz', type=float, default=0.0, show_default=True, help='Static detuning offset')
@click.option('--n-max', type=int, help='Fock truncation per mode')
@output_option
@name_option
@click.pass_context
def simulate(ctx, modes, pulse, pair, noise, typical_noise, counts, offset_hz, n_max, output, name):
    """
    Propagate the gate through the master equation.

    Examples:
        arobust simulate -m modes.json -p pulse.json --typical-noise
        arobust simulate -m modes.json -p pulse.json --typical-noise --counts 1,5,9,13 --n-max 8
    """
    click.echo("⚛️ Running master-equation simulation...")
    try:
        job = _common_job('simulate', output, name, modes=modes, pulse=pulse, pair=pair)
        job['params'] = {
            'noise': _json_file(noise, "noise"),
            'typical_noise': typical_noise,
            'counts': parse_counts(counts) if counts else None,
            'offset_hz': offset_hz,
            'n_max': n_max,
        }
    except Exception as e:
        _fail(ctx, e)
    _run(ctx, job)


@cli.command('run')
@click.argument('job_file', type=click.Path(dir_okay=False))
@click.pass_context
def run(ctx, job_file):
    """
    Run a pipeline stage described by a job JSON file.

    The file names the command (one of modes, design, arobust, diagnose,
    scan, ff, simulate), its input files, output_dir and a params block.

    Examples:
        arobust run jobs/scan_arobust.json
    """
    click.echo(f"🤖 Running job {job_file}...")
    try:
        job = load_job(job_file)
        result = PipelineJob(job, get_config_manager()).run()
    except Exception as e:
        _fail(ctx, e)
    _display_result(result)


@cli.group()
@click.pass_context
def config(ctx):
    """⚙️ Configuration management"""
    pass


@config.command('show')
@click.option('--section', '-s', shell_complete=get_config_sections, help='Show specific section only')
@click.pass_context
def config_show(ctx, section):
    """Show current configuration."""
    try:
        config_manager = get_config_manager(ctx.obj['config'])
        config_data = config_manager.get_raw_config()

        if section:
            if section not in config_data:
                raise InputValidationError(
                    f"unknown section {section!r}; available: {', '.join(sorted(config_data))}",
                    field="section",
                )
            click.echo(f"📋 {section} configuration:")
            click.echo(json.dumps(config_data[section], indent=2))
            return

        click.echo("📋 Complete Configuration:")
        click.echo("=" * 50)
        click.echo(json.dumps(config_data, indent=2))

    except Exception as e:
        _fail(ctx, e)


@config.command('init')
@click.option('--force', '-f', is_flag=True, help='Overwrite existing configuration')
@click.pass_context
def config_init(ctx, force):
    """Initialize configuration file with defaults."""
    try:
        config_path = Path(ctx.obj['config'])

        if config_path.exists() and not force:
            raise InputValidationError(
                f"configuration file already exists: {config_path} (use --force to overwrite)",
                field="config",
            )

        config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, 'w') as f:
            json.dump(ConfigManager.default_config(), f, indent=2)

        click.echo(f"✅ Configuration initialized: {config_path}")

    except Exception as e:
        _fail(ctx, e)


__all__ = ['cli', 'COMMANDS']


if __name__ == '__main__':
    cli()
