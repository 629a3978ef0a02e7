"""
Energy-efficient hybrid precoder/combiner design for sub-connected mmWave
MIMO transceivers, plus a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"
