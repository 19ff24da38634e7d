"""Numerical and symbolic tools for the electromagnetic field with external charges.

Submodules:

``testfn``        bump-atom test functions, derivatives, Fourier transforms
``propagators``   mass-shell quadrature and the Pauli-Jordan pairings
``lightcone``     position-space light-cone pairings and lattice oracles
``weyl``          Weyl words, normal forms, vacuum and charged states
``charges``       dipole functions, charge densities, Gauss readouts
``limits_energy`` scaling limits, seminorms and c-number energies
``cli``           batch front end
"""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
