"""Desk-scale laboratory for counterexamples to pointwise convergence of free Schrödinger evolutions.

Modules
-------
params       threshold formulas in exact arithmetic, experiment parameters, config parsing
torus        linear flows on the torus and density certificates for translated lattices
propagator   exact evolution of piecewise-constant Fourier data and no-cancellation checks
builder      frequency combs and the single- and multi-scale initial data
geometry     symbolic lattice-cube sets, time lattices and pseudo-cube collections
measure      exact measures, content brackets and density checks
experiments  end-to-end drivers, reports and config dispatch
cli          the ``carleson-lab`` command
"""

__version__ = "0.1.0"
