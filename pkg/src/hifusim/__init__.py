"""Finite-element simulation of focused-ultrasound heating and drug
transport with fractionally damped nonlinear acoustics."""

__version__ = "0.1.0"
