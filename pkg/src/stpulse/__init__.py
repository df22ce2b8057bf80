"""Noise-compensating composite exchange pulses for singlet-triplet qubits."""

__version__ = "0.1.0"
