"""Kernel-based learning of Koopman operators from trajectory data."""

__version__ = "0.1.0"
