"""System-level simulator of a single-cell mmWave NR network with multi-user hybrid beamforming."""

__version__ = "0.1.0"
