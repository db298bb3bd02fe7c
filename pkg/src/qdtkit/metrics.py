"""Comparison metrics between reconstructed and reference operators."""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np
import numpy.typing as npt

from .fock import FockOperator
from .tolerances import TOL

__all__ = [
    "fidelity",
    "relative_error",
    "diagonal_distances",
    "ComparisonReport",
    "compare_elements",
]


def _entries(op) -> npt.NDArray[np.complex128]:
    return op.entries if isinstance(op, FockOperator) else np.asarray(op, dtype=complex)


def _psd_root(mat: npt.NDArray, label: str) -> npt.NDArray[np.complex128]:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -TOL.psd:
        raise ValueError(f"{label} is not positive semidefinite (min eig {vals.min():.2e})")
    # reconstructed operators carry eps-level negative eigenvalues; clamp
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(a, b) -> float:
    """Trace-normalized overlap of two PSD operators, 1 iff proportional.

    Computed as (sum of the eigenvalue square roots of sqrt(a) b sqrt(a))
    squared over trace(a) trace(b), all through Hermitian
    eigendecompositions with eigenvalues clamped at zero.
    """
    ma, mb = _entries(a), _entries(b)
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    tra, trb = np.trace(ma).real, np.trace(mb).real
    if tra <= 0 or trb <= 0:
        raise ValueError("fidelity needs operators with positive trace")
    root = _psd_root(ma, "first operator")
    inner = np.linalg.eigvalsh(root @ mb @ root)
    total = np.sum(np.sqrt(np.clip(inner, 0.0, None)))
    return float(total * total / (tra * trb))


def relative_error(a, b) -> float:
    """Frobenius distance ||a - b|| over ||b||."""
    ma, mb = _entries(a), _entries(b)
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    denom = np.linalg.norm(mb)
    if denom == 0:
        raise ValueError("reference operator is zero")
    return float(np.linalg.norm(ma - mb) / denom)


def diagonal_distances(a, b, l_max: int) -> npt.NDArray[np.float64]:
    """Euclidean distance between the l-th diagonals of a and b, l = 0..l_max."""
    ma, mb = _entries(a), _entries(b)
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    diff = ma - mb
    return np.array(
        [np.linalg.norm(np.diagonal(diff, offset=l)) for l in range(l_max + 1)]
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Scalar and per-diagonal distances of a reconstruction to a reference."""

    fidelity: float
    relative_error: float
    per_diagonal_distance: tuple

    def to_json(self) -> str:
        return json.dumps(
            {
                "fidelity": self.fidelity,
                "relative_error": self.relative_error,
                "per_diagonal_distance": list(self.per_diagonal_distance),
            },
            indent=2,
        )

    def csv_rows(self) -> list[str]:
        """Flat rows (header first) with one line per diagonal."""
        rows = ["l,distance,fidelity,relative_error"]
        for l, dist in enumerate(self.per_diagonal_distance):
            rows.append(f"{l},{dist!r},{self.fidelity!r},{self.relative_error!r}")
        return rows


def compare_elements(reconstructed, reference, l_max: int | None = None) -> ComparisonReport:
    """Full comparison of one reconstructed element against its reference.

    Args:
        reconstructed, reference: FockOperator or array, same shape.
        l_max: deepest diagonal to report; defaults to the full dimension.

    Returns:
        ComparisonReport.
    """
    ma = _entries(reconstructed)
    if l_max is None:
        l_max = ma.shape[0] - 1
    return ComparisonReport(
        fidelity=fidelity(reconstructed, reference),
        relative_error=relative_error(reconstructed, reference),
        per_diagonal_distance=tuple(
            float(x) for x in diagonal_distances(reconstructed, reference, l_max)
        ),
    )
