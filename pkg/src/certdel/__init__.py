"""Dual-Regev public-key and leveled homomorphic encryption with certified deletion.

Modules
-------
modq            arithmetic over Z_q, gadget matrix, row reduction
gaussian        discrete Gaussians, tail bounds, samplers, Poisson summation
qudit           sparse multi-register qudit simulator
gaussian_states primal and dual Gaussian states and the duality check
dual_regev      public-key encryption with certified deletion
dual_fhe        leveled homomorphic encryption with certified deletion
games           security experiments and numerical bound checks
experiments     named experiments with JSON reports
cli             command-line interface
"""

__version__ = "0.1.0"
