"""
Pipeline Job - runs one stage of the gate design pipeline from a JobConfig.

Every input (files, parameter blocks, noise models, optimizer configuration)
is loaded and validated in ``prepare``; nothing is written until all of it
has passed. ``execute`` then computes and writes the stage's artifacts.
"""
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from ..analysis.filter_function import (
    NoiseSpectrum,
    filter_function_curve,
    low_frequency_slope,
    spectral_error,
)
from ..composite.arobust import AmSolution, am_concatenate, nth_order_arobust, two_ion_arobust
from ..core.config_manager import ConfigManager, get_config_manager
from ..core.exceptions import InputValidationError
from ..core.mode_model import ModeSpec, chain_modes, load_mode_spec, two_ion_modes
from ..core.pulse import PulseProgram, apply_offset, load_pulse
from ..core.units import TARGET_ANGLE, hz_to_rad, rad_list_to_hz
from ..kernel.gate_kernel import (
    IonPair,
    diagnostics,
    displacement_trajectory,
    rotation_angle_trajectory,
)
from ..optimizer.robust_optimizer import OptimizerConfig, optimize_fm
from ..simulation.lindblad import NoiseModel, lindblad_sim
from ..simulation.scan_sim import detuning_scan, repeated_gate_fit, sequence_fidelities
from .artifacts import build_meta, write_csv, write_json
from .job_config import (
    ArobustParams,
    DesignParams,
    DiagnoseParams,
    FFParams,
    JobConfig,
    ModesParams,
    ScanParams,
    SimulateParams,
)

PULSE_UNITS = {'duration_s': 's', 'detuning_hz': 'Hz', 'amplitude_hz': 'Hz'}
SCAN_UNITS = {'offset_hz': 'Hz', 'err_alpha': 'dimensionless', 'err_theta': 'rad^2'}


@dataclass
class JobResult:
    """Files written by a job and a short summary for display."""
    command: str
    artifacts: Dict[str, Path] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'artifacts': {k: str(v) for k, v in self.artifacts.items()},
            'summary': self.summary
        }


class PipelineJob:
    """One validated pipeline stage."""

    def __init__(self, job: JobConfig, config_manager: Optional[ConfigManager] = None):
        self.job = job
        self.config_manager = config_manager if config_manager is not None else get_config_manager()
        self.output_settings = self.config_manager.get_output_settings()
        self.output_dir = Path(job.output_dir)
        self.job_dict = job.to_dict()
        self._inputs: Dict[str, Any] = {}

        logger.info(f"PipelineJob initialized - command '{job.command}', output {self.output_dir}")

    # ------------------------------------------------------------------ prepare

    def prepare(self) -> None:
        """Load and validate every input; raises before anything is written."""
        job = self.job
        job.check_files()
        params = job.block()
        inputs: Dict[str, Any] = {'params': params}

        if job.modes_file:
            modes = load_mode_spec(job.modes_file)
            pair = IonPair(*job.pair)
            pair.validate(modes)
            inputs['modes'] = modes
            inputs['pair'] = pair
        if job.pulse_file:
            inputs['pulse'] = load_pulse(job.pulse_file)
        inputs['seeds'] = [load_pulse(p) for p in job.seed_pulses]

        if isinstance(params, DesignParams):
            inputs['optimizer'] = OptimizerConfig.from_dict(
                params.optimizer, self.config_manager.get_optimizer_settings()
            )
        elif isinstance(params, ArobustParams):
            self._check_arobust_inputs(params, inputs)
        elif isinstance(params, ScanParams):
            inputs['noise'] = NoiseModel.from_dict(params.noise) if params.noise is not None else None
            if inputs['noise'] is not None:
                inputs['noise'] = inputs['noise'].resolved(inputs['modes'].num_modes)
        elif isinstance(params, FFParams):
            inputs['spectrum'] = (
                NoiseSpectrum.from_dict(params.spectrum) if params.spectrum is not None else None
            )
            settings = self.config_manager.get_filter_settings()
            overrides = {k: getattr(params, k) for k in ('f_min_hz', 'f_max_hz', 'num_points')
                         if getattr(params, k) is not None}
            settings = dataclasses.replace(settings, **overrides)
            if settings.f_min_hz >= settings.f_max_hz:
                raise InputValidationError("f_min_hz must be below f_max_hz", field="params.f_min_hz")
            inputs['filter_settings'] = settings
        elif isinstance(params, SimulateParams):
            inputs['noise'] = self._simulation_noise(params, inputs['modes'])

        self._inputs = inputs
        logger.debug(f"Inputs validated for '{job.command}'")

    def _check_arobust_inputs(self, params: ArobustParams, inputs: Dict[str, Any]) -> None:
        if params.method == 'mirror':
            if 'pulse' not in inputs:
                raise InputValidationError("mirror construction needs pulse_file", field="pulse_file")
            return
        expected = 2 if params.method == 'am' else params.order + 1
        if len(inputs['seeds']) != expected:
            raise InputValidationError(
                f"{params.method} construction needs {expected} seed pulses, got {len(inputs['seeds'])}",
                field="seed_pulses",
            )
        if params.ratios is not None and len(params.ratios) != inputs['modes'].num_modes:
            raise InputValidationError("one drift ratio per mode required", field="params.ratios")

    def _simulation_noise(self, params: SimulateParams, modes: ModeSpec) -> NoiseModel:
        if params.noise is not None:
            return NoiseModel.from_dict(params.noise).resolved(modes.num_modes)
        if params.typical_noise:
            return NoiseModel.trapped_ion_typical(modes.num_modes)
        return NoiseModel.noiseless(modes.num_modes)

    # ------------------------------------------------------------------ execute

    def run(self) -> JobResult:
        self.prepare()
        return self.execute()

    def execute(self) -> JobResult:
        if not self._inputs:
            raise InputValidationError("job was not prepared", field="job")
        handler = getattr(self, f"_run_{self.job.command}")
        result: JobResult = handler(self._inputs['params'])
        logger.info(f"Job '{self.job.command}' wrote {len(result.artifacts)} artifact(s)")
        return result

    def _path(self, suffix: str) -> Path:
        return self.output_dir / f"{self.job.stem}{suffix}"

    def _meta(self, units: Dict[str, str], kind: str) -> Dict[str, Any]:
        return build_meta(self.job_dict, units, kind)

    def _csv(self, frame: pd.DataFrame, suffix: str, units: Dict[str, str], kind: str) -> Path:
        return write_csv(frame, self._path(suffix), self._meta(units, kind),
                         self.output_settings.float_format)

    def _pulse_json(self, pulse: PulseProgram, suffix: str = "_pulse.json") -> Path:
        return write_json(pulse.to_dict(), self._path(suffix), self._meta(PULSE_UNITS, "pulse"))

    def _run_modes(self, params: ModesParams) -> JobResult:
        if params.kind == 'two_ion':
            modes = two_ion_modes(hz_to_rad(params.com_freq_hz), hz_to_rad(params.tilt_freq_hz), params.eta)
        else:
            modes = chain_modes(params.num_ions, hz_to_rad(params.axial_freq_hz),
                                hz_to_rad(params.radial_freq_hz), params.eta)
        if params.drift_ratios is not None:
            modes = modes.with_drift_ratios(params.drift_ratios)
        path = write_json(modes.to_dict(), self._path(".json"),
                          self._meta({'mode_freqs_hz': 'Hz'}, "mode_spec"))
        return JobResult('modes', {'modes': path}, {'mode_freqs_hz': rad_list_to_hz(modes.mode_freqs)})

    def _run_design(self, params: DesignParams) -> JobResult:
        report = optimize_fm(self._inputs['optimizer'], self._inputs['modes'], self._inputs['pair'],
                             self.config_manager.get_kernel_settings(), params.workers)
        artifacts = {
            'pulse': self._pulse_json(report.pulse),
            'report': write_json(report.to_dict(), self._path("_report.json"),
                                 self._meta({'required_amplitude_hz': 'Hz', 'best_cost': 'dimensionless'},
                                            "optimizer_report")),
            'cost_history': self._csv(
                pd.DataFrame({'evaluation': np.arange(len(report.cost_history)),
                              'cost': report.cost_history}),
                "_cost.csv", {'cost': 'dimensionless'}, "cost_history",
            ),
        }
        summary = {
            'converged': report.converged,
            'best_cost': report.best_cost,
            'theta': report.diagnostics.theta,
            'err_alpha': report.diagnostics.err_alpha,
        }
        return JobResult('design', artifacts, summary)

    def _run_arobust(self, params: ArobustParams) -> JobResult:
        modes, pair = self._inputs['modes'], self._inputs['pair']
        kernel = self.config_manager.get_kernel_settings()
        arobust = self.config_manager.get_arobust_settings()
        seeds: List[PulseProgram] = self._inputs['seeds']
        solution: AmSolution
        if params.method == 'mirror':
            solution = two_ion_arobust(self._inputs['pulse'], modes, pair, kernel, arobust)
        elif params.method == 'am':
            solution = am_concatenate(seeds[0], seeds[1], modes, pair, params.ratios, kernel, arobust)
        else:
            solution = nth_order_arobust(seeds, modes, pair, params.ratios, params.order, kernel, arobust)
        artifacts = {
            'pulse': self._pulse_json(solution.composite),
            'solution': write_json(solution.to_dict(), self._path("_solution.json"),
                                   self._meta({'betas': 'dimensionless', 'residuals': 'rad, s^j'},
                                              "am_solution")),
        }
        return JobResult('arobust', artifacts, {'betas': solution.betas, 'residuals': solution.residuals})

    def _run_diagnose(self, params: DiagnoseParams) -> JobResult:
        pulse, modes, pair = self._inputs['pulse'], self._inputs['modes'], self._inputs['pair']
        kernel = self.config_manager.get_kernel_settings()
        target = params.target_angle if params.target_angle is not None else TARGET_ANGLE
        diag = diagnostics(pulse, modes, pair, params.max_order, target, kernel)
        units = {'theta': 'rad', 'dtheta': 's', 'dalpha': 's', 'err_theta': 'rad^2'}
        artifacts = {
            'diagnostics': write_json(diag.to_dict(), self._path(".json"), self._meta(units, "diagnostics")),
            'table': self._csv(diag.to_dataframe(), ".csv", units, "diagnostics"),
        }
        if params.trajectory > 0:
            artifacts['trajectory'] = self._csv(
                self._trajectory_frame(pulse, modes, pair, params.trajectory),
                "_trajectory.csv", {'time_s': 's', 'theta': 'rad'}, "trajectory",
            )
        return JobResult('diagnose', artifacts, {'theta': diag.theta, 'err_alpha': diag.err_alpha,
                                                 'dtheta_weighted': diag.dtheta_weighted})

    def _trajectory_frame(self, pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                          points: int) -> pd.DataFrame:
        kernel = self.config_manager.get_kernel_settings()
        times = np.linspace(0.0, pulse.total_duration, points)
        columns: Dict[str, Any] = {'time_s': times,
                                   'theta': rotation_angle_trajectory(pulse, modes, pair, times, kernel)}
        for p, ion in enumerate(pair.ions):
            for k in range(modes.num_modes):
                alpha = displacement_trajectory(pulse, modes, ion, k, times, kernel)
                columns[f'alpha_{p}_{k}_re'] = alpha.real
                columns[f'alpha_{p}_{k}_im'] = alpha.imag
        return pd.DataFrame(columns)

    def _run_scan(self, params: ScanParams) -> JobResult:
        offsets = [hz_to_rad(v) for v in params.offsets_hz]
        result = detuning_scan(
            self._inputs['pulse'], self._inputs['modes'], self._inputs['pair'], offsets,
            params.repeats, self._inputs['noise'], params.n_max,
            self.config_manager.get_kernel_settings(), self.config_manager.get_simulation_settings(),
        )
        frame = result.to_dataframe()
        path = self._csv(frame, ".csv", SCAN_UNITS, "detuning_scan")
        summary = {
            'points': len(frame),
            'max_even_deviation': result.max_even_deviation(),
            'max_p01_10': float(frame['p01_10'].max()),
        }
        return JobResult('scan', {'scan': path}, summary)

    def _run_ff(self, params: FFParams) -> JobResult:
        pulse, modes, pair = self._inputs['pulse'], self._inputs['modes'], self._inputs['pair']
        settings = self._inputs['filter_settings']
        curve = filter_function_curve(pulse, modes, pair, kernel_settings=self.config_manager.get_kernel_settings(),
                                      settings=settings)
        summary: Dict[str, Any] = {
            'slope_theta': low_frequency_slope(curve, "theta", params.slope_below_hz),
            'slope_alpha': low_frequency_slope(curve, "alpha", params.slope_below_hz),
        }
        artifacts = {'curve': self._csv(curve.to_dataframe(), ".csv", {'freq_hz': 'Hz'}, "filter_function")}
        spectrum = self._inputs['spectrum']
        if spectrum is not None:
            error = spectral_error(curve, spectrum, settings)
            summary['spectral_error'] = error.to_dict()
        artifacts['summary'] = write_json(summary, self._path("_summary.json"),
                                          self._meta({'slope_below_hz': 'Hz'}, "filter_function_summary"))
        return JobResult('ff', artifacts, summary)

    def _run_simulate(self, params: SimulateParams) -> JobResult:
        pulse, modes, pair = self._inputs['pulse'], self._inputs['modes'], self._inputs['pair']
        noise: NoiseModel = self._inputs['noise']
        sim_settings = self.config_manager.get_simulation_settings()
        offset = hz_to_rad(params.offset_hz)
        units = {'nbar': 'quanta', 'fidelity': 'dimensionless'}
        if params.counts:
            frame = sequence_fidelities(pulse, modes, pair, params.counts, noise, offset,
                                        params.n_max, sim_settings)
            fit = repeated_gate_fit(frame['gate_count'].tolist(), frame['fidelity'].tolist())
            artifacts = {
                'fidelities': self._csv(frame, "_sequence.csv", units, "sequence_fidelities"),
                'fit': write_json({'noise': noise.to_dict(), **fit.to_dict()}, self._path("_fit.json"),
                                  self._meta(units, "gate_fit")),
            }
            return JobResult('simulate', artifacts, fit.to_dict())

        result = lindblad_sim(apply_offset(pulse, offset), modes, pair, noise, params.n_max, sim_settings)
        payload = {
            'noise': noise.to_dict(),
            **result.to_dict(),
            'rho_re': result.rho.real.tolist(),
            'rho_im': result.rho.imag.tolist(),
        }
        path = write_json(payload, self._path(".json"), self._meta(units, "lindblad"))
        return JobResult('simulate', {'result': path}, result.observables.to_dict())


def run_job(job: JobConfig, config_manager: Optional[ConfigManager] = None) -> JobResult:
    return PipelineJob(job, config_manager).run()
