"""
Main entry point for the A-robust gate design CLI.
Allows running with: python -m gate_system
"""

from .cli import cli

if __name__ == "__main__":
    cli()
