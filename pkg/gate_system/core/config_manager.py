"""
Centralized Configuration Manager
Provides singleton access to numerical settings shared by every stage.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger


@dataclass
class KernelSettings:
    """Closed-form kernel branch switches and oracle quadrature settings."""
    series_switch: float = 1.0  # |mu*dt| below which higher moments use their series
    series_terms: int = 30
    pair_switch: float = 0.1  # |b*dt| below which the ordered pair integral uses its series
    pair_terms: int = 14
    gl_nodes: int = 64
    quad_epsrel: float = 1e-12
    quad_limit: int = 400


@dataclass
class OptimizerSettings:
    """Defaults for the robust FM optimizer."""
    num_segments: int = 28
    num_starts: int = 8
    alpha_bar_weight: float = 1.0
    ff_weight: float = 10.0
    amplitude_weight: float = 1.0
    max_iters: int = 2000
    tolerance: float = 1e-10
    cost_threshold: float = 1e-8
    start_spread: float = 0.25  # in units of 2*pi/gate_time
    restarts: int = 3
    workers: int = 1


@dataclass
class ArobustSettings:
    """Tolerances for A-robust constructions."""
    robust_err_alpha: float = 1e-4
    angle_tolerance: float = 1e-6
    derivative_tolerance: float = 1e-4  # sum |d alpha/d omega|^2 / tau^2
    max_condition: float = 1e12
    eta_rtol: float = 1e-9
    composite_tolerance: float = 1e-6


@dataclass
class FilterSettings:
    """Frequency grid and spectral integration settings."""
    f_min_hz: float = 10.0
    f_max_hz: float = 1.0e6
    num_points: int = 200
    fit_decades: float = 1.0
    coarse_tolerance: float = 0.05


@dataclass
class SimulationSettings:
    """Master-equation and scan settings."""
    n_max: int = 15
    top_level_limit: float = 1e-4
    trace_tolerance: float = 1e-8
    gate_counts: List[int] = field(default_factory=lambda: [1, 5, 9, 13])
    max_tensor_entries: float = 4.0e6
    workers: int = 1


@dataclass
class OutputSettings:
    """Artifact writing settings."""
    output_directory: str = "results"
    float_format: str = "%.12e"


class ConfigManager:
    """
    Singleton configuration manager for the entire toolkit.

    This ensures consistent numerical settings across all components:
    - CLI commands
    - Batch jobs
    - Kernel, optimizer and composite constructions
    - Filter functions and simulations
    """

    _instance: Optional['ConfigManager'] = None
    _config_data: Optional[Dict[str, Any]] = None
    _config_path: Optional[str] = None

    def __new__(cls, config_path: Optional[str] = None) -> 'ConfigManager':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self, config_path: Optional[str] = None):
        if self._config_data is None:
            self._load_config(config_path)

    def _load_config(self, config_path: Optional[str] = None) -> None:
        """Load configuration from JSON file."""
        if config_path:
            self._config_path = config_path
        else:
            # Default config path
            current_dir = Path(__file__).parent.parent.parent
            self._config_path = str(current_dir / "config" / "gate_config.json")

        try:
            with open(self._config_path, 'r') as f:
                self._config_data = json.load(f)
            logger.info(f"Configuration loaded from {self._config_path}")
        except FileNotFoundError:
            logger.warning(f"Config file not found: {self._config_path}. Using defaults.")
            self._config_data = self.default_config()
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in config file: {e}. Using defaults.")
            self._config_data = self.default_config()

    @staticmethod
    def default_config() -> Dict[str, Any]:
        """Default configuration, used when the file is missing or invalid."""
        return {
            "kernel": KernelSettings().__dict__.copy(),
            "optimizer": OptimizerSettings().__dict__.copy(),
            "arobust": ArobustSettings().__dict__.copy(),
            "filter_function": FilterSettings().__dict__.copy(),
            "simulation": SimulationSettings().__dict__.copy(),
            "output": OutputSettings().__dict__.copy(),
        }

    def _section(self, name: str) -> Dict[str, Any]:
        assert self._config_data is not None
        return self._config_data.get(name, {})

    def get_kernel_settings(self) -> KernelSettings:
        """Get kernel settings."""
        data = self._section("kernel")
        defaults = KernelSettings()

        return KernelSettings(
            series_switch=data.get("series_switch", defaults.series_switch),
            series_terms=data.get("series_terms", defaults.series_terms),
            pair_switch=data.get("pair_switch", defaults.pair_switch),
            pair_terms=data.get("pair_terms", defaults.pair_terms),
            gl_nodes=data.get("gl_nodes", defaults.gl_nodes),
            quad_epsrel=data.get("quad_epsrel", defaults.quad_epsrel),
            quad_limit=data.get("quad_limit", defaults.quad_limit)
        )

    def get_optimizer_settings(self) -> OptimizerSettings:
        """Get optimizer defaults."""
        data = self._section("optimizer")
        defaults = OptimizerSettings()

        return OptimizerSettings(
            num_segments=data.get("num_segments", defaults.num_segments),
            num_starts=data.get("num_starts", defaults.num_starts),
            alpha_bar_weight=data.get("alpha_bar_weight", defaults.alpha_bar_weight),
            ff_weight=data.get("ff_weight", defaults.ff_weight),
            amplitude_weight=data.get("amplitude_weight", defaults.amplitude_weight),
            max_iters=data.get("max_iters", defaults.max_iters),
            tolerance=data.get("tolerance", defaults.tolerance),
            cost_threshold=data.get("cost_threshold", defaults.cost_threshold),
            start_spread=data.get("start_spread", defaults.start_spread),
            restarts=data.get("restarts", defaults.restarts),
            workers=data.get("workers", defaults.workers)
        )

    def get_arobust_settings(self) -> ArobustSettings:
        """Get A-robust tolerances."""
        data = self._section("arobust")
        defaults = ArobustSettings()

        return ArobustSettings(
            robust_err_alpha=data.get("robust_err_alpha", defaults.robust_err_alpha),
            angle_tolerance=data.get("angle_tolerance", defaults.angle_tolerance),
            derivative_tolerance=data.get("derivative_tolerance", defaults.derivative_tolerance),
            max_condition=data.get("max_condition", defaults.max_condition),
            eta_rtol=data.get("eta_rtol", defaults.eta_rtol),
            composite_tolerance=data.get("composite_tolerance", defaults.composite_tolerance)
        )

    def get_filter_settings(self) -> FilterSettings:
        """Get filter-function grid settings."""
        data = self._section("filter_function")
        defaults = FilterSettings()

        return FilterSettings(
            f_min_hz=data.get("f_min_hz", defaults.f_min_hz),
            f_max_hz=data.get("f_max_hz", defaults.f_max_hz),
            num_points=data.get("num_points", defaults.num_points),
            fit_decades=data.get("fit_decades", defaults.fit_decades),
            coarse_tolerance=data.get("coarse_tolerance", defaults.coarse_tolerance)
        )

    def get_simulation_settings(self) -> SimulationSettings:
        """Get simulation settings."""
        data = self._section("simulation")
        defaults = SimulationSettings()

        return SimulationSettings(
            n_max=data.get("n_max", defaults.n_max),
            top_level_limit=data.get("top_level_limit", defaults.top_level_limit),
            trace_tolerance=data.get("trace_tolerance", defaults.trace_tolerance),
            gate_counts=list(data.get("gate_counts", defaults.gate_counts)),
            max_tensor_entries=data.get("max_tensor_entries", defaults.max_tensor_entries),
            workers=data.get("workers", defaults.workers)
        )

    def get_output_settings(self) -> OutputSettings:
        """Get artifact output settings."""
        data = self._section("output")
        defaults = OutputSettings()

        return OutputSettings(
            output_directory=data.get("output_directory", defaults.output_directory),
            float_format=data.get("float_format", defaults.float_format)
        )

    def reload_config(self, config_path: Optional[str] = None) -> None:
        """Reload configuration from file."""
        self._config_data = None
        self._load_config(config_path)

    def get_raw_config(self) -> Dict[str, Any]:
        """Get raw configuration data."""
        assert self._config_data is not None
        return json.loads(json.dumps(self._config_data))

    @property
    def config_path(self) -> Optional[str]:
        return self._config_path

    def update_config(self, section: str, updates: Dict[str, Any]) -> None:
        """Update configuration section and save to file."""
        assert self._config_data is not None
        if section not in self._config_data:
            self._config_data[section] = {}

        self._config_data[section].update(updates)

        # Save to file
        try:
            with open(str(self._config_path), 'w') as f:
                json.dump(self._config_data, f, indent=2)
            logger.info(f"Configuration updated and saved to {self._config_path}")
        except OSError as e:
            logger.error(f"Failed to save configuration: {e}")

    @classmethod
    def get_instance(cls, config_path: Optional[str] = None) -> 'ConfigManager':
        """Get the singleton instance."""
        if cls._instance is None:
            cls._instance = cls(config_path)
        return cls._instance

    @classmethod
    def reset_instance(cls) -> None:
        """Reset the singleton instance (useful for testing)."""
        cls._instance = None
        cls._config_data = None


# Global function for easy access
def get_config_manager(config_path: Optional[str] = None) -> ConfigManager:
    """Get the global configuration manager instance."""
    return ConfigManager.get_instance(config_path)
