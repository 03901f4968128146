"""Extended Kaczmarz solvers and benchmarks for inconsistent least-squares
systems: dense/CSR matrix core, REK/PREK/EMRK/MEMRK drivers, problem
generators, an exact SVD oracle with convergence-bound evaluators, and a
reproducible benchmark harness with a CLI."""

__version__ = "0.1.0"
