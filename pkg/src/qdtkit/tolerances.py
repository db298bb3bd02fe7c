"""Central numerical tolerance record.

Every module pulls its defaults from the single ``TOL`` instance below so
that tolerance policy lives in one place.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # matrix structure
    hermitian: float = 1e-12          # max |A - A^dag| accepted as Hermitian
    psd: float = 1e-8                 # min eigenvalue floor for POVM elements
    completeness: float = 1e-8        # element-wise |sum_n Pi_n - I|

    # detector model series
    series: float = 1e-10             # certified truncation bound on Pi_0

    # solver
    solver_tol: float = 1e-8          # KKT residual target
    solver_max_iter: int = 100_000
    constraint: float = 1e-8          # allowed constraint violation in solutions

    # recursion
    bound_slack: float = 1e-9         # eps_pos widening of Sylvester intervals
    zero_diag: float = 1e-12          # diagonal treated as exactly zero

    # metrics
    eig_clamp: float = 1e-10          # negative-eigenvalue clamp in fidelity


TOL = Tolerances()
