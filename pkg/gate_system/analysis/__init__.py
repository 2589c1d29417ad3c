from .filter_function import NoiseSpectrum, FilterFunctionCurve, SpectralError, filter_function_curve

__all__ = ['NoiseSpectrum', 'FilterFunctionCurve', 'SpectralError', 'filter_function_curve']
