"""Stochastic and batch k-means, seeding, diagnostics, and an experiment harness.

The package is organized by concern:

- :mod:`skm.dataset` -- immutable point collections, file loaders, and a
  seedable Gaussian-mixture generator.
- :mod:`skm.geometry` -- Voronoi assignment, cluster means, cost
  functionals, and batch (Lloyd's) k-means.
- :mod:`skm.stochastic` -- mini-batch k-means with flat / count-adaptive /
  constant learning rates; online k-means is the ``m=1`` special case.
- :mod:`skm.seeding` -- uniform random seeds and buckshot seeding via
  single-linkage.
- :mod:`skm.diagnostics` -- centroidal/clustering distances, margins,
  stationarity and clusterability checks, update probabilities.
- :mod:`skm.harness` -- experiment orchestration: convergence traces,
  log-log slope fits, and batch-relative cost-ratio tables.
- :mod:`skm.cli` -- the ``skm`` command-line entry point.

All randomness flows through numpy's PCG64 generator; every run is
reproducible from its (seed, config) pair.
"""

__version__ = "0.1.0"

PRNG_NAME = "numpy PCG64 (numpy.random.default_rng)"
