"""Hessian-corrected MALA, MALA and random-walk Metropolis samplers."""

__version__ = "0.1.0"
