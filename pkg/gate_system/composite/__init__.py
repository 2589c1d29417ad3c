from .arobust import AmSolution, two_ion_arobust, am_concatenate, nth_order_arobust

__all__ = ['AmSolution', 'two_ion_arobust', 'am_concatenate', 'nth_order_arobust']
