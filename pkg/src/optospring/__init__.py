"""Optical-spring resonator with radiation-pressure-noise-cancelling feedback."""

from .params import (DEFAULT_CONSTANTS, Detector, FeedbackKernel, MechanicalOscillator, OpticalField,
                     OpticalFieldInput, OscillatorInput, PhysicalConstants, SystemConfig, derive_field,
                     sample_config)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONSTANTS", "Detector", "FeedbackKernel", "MechanicalOscillator", "OpticalField",
    "OpticalFieldInput", "OscillatorInput", "PhysicalConstants", "SystemConfig", "derive_field",
    "sample_config",
]
