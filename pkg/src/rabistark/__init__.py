"""Multiqubit multimode quantum Rabi and Rabi-Stark models: dark states,
spectra, adiabatic W-state generation and open-system catch and release."""

__version__ = "0.1.0"
