"""Weighted-particle nonlinear filtering laboratory.

Particle representations of the unnormalized (Zakai) and normalized
(Kushner-Stratonovich) filters for three observation models, the Picard
time discretization of the likelihood weight, and tools for measuring the
first-order error expansion of that discretization.
"""

__version__ = "0.1.0"
