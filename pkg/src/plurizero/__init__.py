"""Numerical laboratory for zeros of random polynomials and sections.

Random polynomials f_n = sum_j a_j p_nj built on a basis adapted to a weighted
compact (K, q) have normalized zero currents that equidistribute toward the
weighted equilibrium measure dd^c V_{K,q}.  The package samples such
polynomials, extracts their zeros and measures the convergence.
"""

__version__ = "0.1.0"
