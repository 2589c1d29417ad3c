from .lindblad import NoiseModel, LindbladResult, lindblad_sim
from .scan_sim import ScanResult, GateFit, detuning_scan, ideal_populations, repeated_gate_fit

__all__ = [
    'NoiseModel',
    'LindbladResult',
    'lindblad_sim',
    'ScanResult',
    'GateFit',
    'detuning_scan',
    'ideal_populations',
    'repeated_gate_fit'
]
