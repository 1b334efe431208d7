"""Finite-dimensional simulation and verification of stochastic integrals driven
by cylindrical Levy processes on Hilbert spaces."""

from .hilbert import HSOperator, HVector, SOperator
from .integrands import SimpleProcess, discretize
from .integrator import IntegralSample, integrate_simple, refine_and_integrate
from .levy import LevyModel, NoisePanel, SymbolSpec, generate_noise_panel, increment_cf
from .prokhorov import EmpiricalMeasure, prokhorov_distance

__all__ = [
    "EmpiricalMeasure",
    "HSOperator",
    "HVector",
    "IntegralSample",
    "LevyModel",
    "NoisePanel",
    "SOperator",
    "SimpleProcess",
    "SymbolSpec",
    "discretize",
    "generate_noise_panel",
    "increment_cf",
    "integrate_simple",
    "prokhorov_distance",
    "refine_and_integrate",
]
