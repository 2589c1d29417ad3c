from .robust_optimizer import OptimizerConfig, OptimizerReport, RobustPulseOptimizer, optimize_fm

__all__ = ['OptimizerConfig', 'OptimizerReport', 'RobustPulseOptimizer', 'optimize_fm']
