"""Multilevel finite basis physics-informed neural networks.

Submodules
----------
autodiff       reverse-mode tape and input-derivative jets
network        fully connected subdomain networks
decomposition  overlapping multilevel decompositions, windows, active maps
ansatz         model specs, batched evaluation, hard constraints, checkpoints
problems       Laplace, multi-scale Laplace and Helmholtz problems
training       collocation grids, loss, Adam, training loop, normalized L1
fdsolver       finite-difference Helmholtz reference solutions
harness        experiment presets, runs, summaries and the command line
"""

__version__ = "0.1.0"
