from .gate_kernel import IonPair, GateDiagnostics, ModeDrive, diagnostics

__all__ = ['IonPair', 'GateDiagnostics', 'ModeDrive', 'diagnostics']
