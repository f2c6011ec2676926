"""Two-mode squeezing of microwave resonators through a driven superconducting qubit.

Subpackages: :mod:`fockspace` (operators and states), :mod:`model`
(Hamiltonians and derived parameters), :mod:`solvers` (Schrodinger, Lindblad,
quantum trajectories), :mod:`observables` (EPR variance and diagnostics) and
:mod:`scenarios` (configs, runs, CLI).
"""

from __future__ import annotations

__version__ = "0.1.0"
