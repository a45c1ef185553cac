"""Data-free knowledge transfer between place-recognition agents, simulated on synthetic worlds."""

__version__ = "0.1.0"
