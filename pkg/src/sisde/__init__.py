"""Simulation and diagnostics for a stochastic SIS model with demographic noise.

The pieces:

- ``transition``: jump rates, diffusion-limit drift and covariance, the jump chain
- ``coefficients``: truncated drift and Hölder diffusion on a root interval
- ``drivers``: dyadic partitions and reproducible Brownian increments
- ``engine``: Euler-Peano simulation and seeded ensembles
- ``diagnostics``: Cauchy errors, moment bounds, theta functions
- ``fokker_planck``: master-equation and Fokker-Planck lattice solvers
- ``cli``: the ``sisde`` command
"""

__version__ = "0.1.0"
