"""Estimator front-ends for the three reconstruction methods.

Each method is wrapped in a scikit-learn style estimator: construct with
hyperparameters, fit on a measurement record, read the result off fitted
attributes. The wrappers add no numerics of their own; they exist so
reconstructions compose with the usual parameter-sweep tooling.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import baseline
from .fock import coherent_amplitudes
from .recursive import ReconConfig, run_recursion

__all__ = [
    "RecursiveTomography",
    "FullJointTomography",
    "PFunctionTomography",
]


def _element_probabilities(entries: npt.NDArray, alphas) -> npt.NDArray[np.float64]:
    """p(alpha) = <alpha|X|alpha> for one operator, clipped into [0, 1]."""
    d = entries.shape[0]
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    c = np.vstack(
        [coherent_amplitudes(abs(a), float(np.angle(a)), d).coeffs for a in alphas]
    )
    p = np.real(np.einsum("mj,jk,mk->m", c.conj(), entries, c))
    return np.clip(p, 0.0, 1.0)


class _POVMTomography(BaseEstimator):
    """Shared plumbing for estimators whose fitted state is a POVMSet."""

    def predict_proba(self, alphas) -> npt.NDArray[np.float64]:
        """Outcome probabilities for coherent probes, shape (len(alphas), N)."""
        check_is_fitted(self)
        cols = [
            _element_probabilities(op.entries, alphas) for op in self.povm_.outcomes
        ]
        return np.stack(cols, axis=1)

    def score(self, X, y=None) -> float:
        """Negative RMS misfit between predictions and observed fractions."""
        check_is_fitted(self)
        freq = X.frequencies().reshape(-1, X.n_outcomes)
        pred = self.predict_proba(X.grid.alphas().ravel())
        return -float(np.sqrt(np.mean((pred - freq) ** 2)))


class RecursiveTomography(_POVMTomography):
    """Diagonal-by-diagonal POVM reconstruction.

    Parameters mirror ReconConfig; fit consumes a Dataset or ExactData on
    a polar probe grid.

    Attributes (after fit):
        povm_: reconstructed POVMSet.
        report_: run report with per-diagonal solve records.
        dim_: Fock truncation.
    """

    def __init__(
        self,
        dim: int = 60,
        gamma: float = 1.0,
        l_max: int | None = None,
        solver_tol: float | None = None,
        solver_max_iter: int | None = None,
    ):
        self.dim = dim
        self.gamma = gamma
        self.l_max = l_max
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter

    def _config(self) -> ReconConfig:
        extra = {}
        if self.solver_tol is not None:
            extra["solver_tol"] = self.solver_tol
        if self.solver_max_iter is not None:
            extra["solver_max_iter"] = self.solver_max_iter
        return ReconConfig(dim=self.dim, gamma=self.gamma, l_max=self.l_max, **extra)

    def fit(self, X, y=None) -> "RecursiveTomography":
        povm, report = run_recursion(X, self._config())
        self.povm_ = povm
        self.report_ = report
        self.dim_ = povm.dim
        return self


class FullJointTomography(_POVMTomography):
    """All-elements-at-once regularized least squares (small dim only).

    Attributes (after fit): povm_, report_, dim_.
    """

    def __init__(self, dim: int = 8, gamma: float = 0.1):
        self.dim = dim
        self.gamma = gamma

    def fit(self, X, y=None) -> "FullJointTomography":
        povm, report = baseline.full_joint_solve(X, self.dim, self.gamma)
        self.povm_ = povm
        self.report_ = report
        self.dim_ = povm.dim
        return self


class PFunctionTomography(BaseEstimator):
    """Selective element-by-element kernel estimation of one POVM element.

    fit consumes LatticeData (outcome fractions on a phase-space lattice)
    and estimates the leading block_size x block_size block of the tracked
    element. No physicality is enforced: the raw block, including any
    negative eigenvalues picked up from noise, is the result.

    Attributes (after fit):
        block_: complex Hermitian block, shape (block_size, block_size).
        report_: diagnostic dict (min eigenvalue, grid, cutoff).
        dim_: block size.
    """

    def __init__(self, block_size: int = 5, cutoff: float = baseline.DEFAULT_CUTOFF):
        self.block_size = block_size
        self.cutoff = cutoff

    def fit(self, X: baseline.LatticeData, y=None) -> "PFunctionTomography":
        block = baseline.pfunction_block(
            X.fractions, X.grid, self.block_size, self.cutoff
        )
        self.block_ = block
        self.dim_ = self.block_size
        self.report_ = {
            "block_size": self.block_size,
            "cutoff": self.cutoff,
            "min_eigenvalue": float(np.linalg.eigvalsh(block).min()),
            "trials": X.trials,
        }
        return self

    def predict_proba(self, alphas) -> npt.NDArray[np.float64]:
        """Tracked-outcome probability from the raw block (complement appended)."""
        check_is_fitted(self)
        p = _element_probabilities(self.block_, alphas)
        return np.stack([p, 1.0 - p], axis=1)
