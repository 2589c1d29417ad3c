"""
Segment primitives.

Every gate quantity reduces to integrals of ``s**m * exp(i*mu*s)`` over a single
segment and to ordered double integrals of two exponentials over the same
segment. Both are evaluated here in closed form, switching to power series
where the closed forms cancel catastrophically.
"""
import math
from typing import Optional

import numpy as np

from ..core.config_manager import KernelSettings, get_config_manager


def _settings(settings: Optional[KernelSettings]) -> KernelSettings:
    return settings if settings is not None else get_config_manager().get_kernel_settings()


def segment_moments(mu: np.ndarray, dt: np.ndarray, max_order: int,
                    settings: Optional[KernelSettings] = None) -> np.ndarray:
    """I_m = integral_0^dt s**m exp(i mu s) ds for m = 0..max_order.

    ``mu`` and ``dt`` broadcast against each other; the result has shape
    ``(max_order + 1,) + broadcast_shape``.
    """
    cfg = _settings(settings)
    mu = np.asarray(mu, dtype=float)
    dt = np.asarray(dt, dtype=float)
    mu, dt = np.broadcast_arrays(mu, dt)
    x = mu * dt
    phase = np.exp(1j * x)

    moments = np.empty((max_order + 1,) + x.shape, dtype=complex)
    # sinc form is exact down to mu = 0
    moments[0] = dt * np.exp(0.5j * x) * np.sinc(x / (2.0 * math.pi))
    if max_order == 0:
        return moments

    small = np.abs(x) < cfg.series_switch
    safe_mu = np.where(small, 1.0, mu)

    # Taylor branch: dt**(m+1) * sum_n (ix)**n / (n! (n+m+1))
    terms = np.empty((cfg.series_terms,) + x.shape, dtype=complex)
    terms[0] = 1.0
    for n in range(1, cfg.series_terms):
        terms[n] = terms[n - 1] * (1j * x) / n
    n_index = np.arange(cfg.series_terms).reshape((-1,) + (1,) * x.ndim)

    for m in range(1, max_order + 1):
        recursive = (dt ** m * phase - m * moments[m - 1]) / (1j * safe_mu)
        series = dt ** (m + 1) * np.sum(terms / (n_index + m + 1), axis=0)
        moments[m] = np.where(small, series, recursive)
    return moments


def ordered_pair_integral(a: np.ndarray, b: np.ndarray, dt: np.ndarray,
                          settings: Optional[KernelSettings] = None) -> np.ndarray:
    """S = integral_0^dt ds integral_0^s du exp(i (a s + b u))."""
    cfg = _settings(settings)
    a, b, dt = np.broadcast_arrays(np.asarray(a, dtype=float),
                                   np.asarray(b, dtype=float),
                                   np.asarray(dt, dtype=float))
    small = np.abs(b * dt) < cfg.pair_switch
    safe_b = np.where(small, 1.0, b)

    e_sum = segment_moments(a + b, dt, 0, cfg)[0]
    e_a_moments = segment_moments(a, dt, cfg.pair_terms + 1, cfg)
    closed = (e_sum - e_a_moments[0]) / (1j * safe_b)

    series = np.zeros(a.shape, dtype=complex)
    coeff = np.ones(a.shape, dtype=complex)
    for n in range(cfg.pair_terms + 1):
        # (ib)^n / (n+1)!
        series = series + coeff / (n + 1) * e_a_moments[n + 1]
        coeff = coeff * (1j * b) / (n + 1)
    return np.where(small, series, closed)
