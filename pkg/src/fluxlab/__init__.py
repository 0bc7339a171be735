"""Numerical laboratory for flux-threaded punctured-plane quantum mechanics.

Modules
-------
algebra      canonical-group Lie algebra, its operator representation, checks
hamiltonian  sector operators via two independent assembly routes, holonomy
spectral     sector eigensolves against a fractional-order Bessel oracle
dynamics     unitary wavepacket propagation and two-path interference
cli          configuration-driven batch front end
"""

__version__ = "0.1.0"
