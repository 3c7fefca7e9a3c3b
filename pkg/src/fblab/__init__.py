"""Numerical toolkit for finite-blocklength converse bounds.

Computes capacities, capacity-achieving output distributions, exact
Neyman-Pearson values, converse bounds with explicit constants, exact
code-induced output statistics, concentration transfers and l_q norm
profiles of Gaussian codes, and checks each inequality against
brute-force oracles.
"""

__version__ = "0.1.0"

from .reports import BoundReport

__all__ = ["BoundReport", "__version__"]
