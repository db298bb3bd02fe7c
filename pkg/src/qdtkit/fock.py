"""Truncated Fock-basis linear algebra.

Dense complex operators on the photon-number basis |0>, ..., |d-1>,
coherent-state amplitude vectors, and the log-space factorial weights used
by every design matrix downstream. All factorial-weighted coefficients go
through log-gamma; raw factorials overflow long before d ~ 150.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import ModelInvalidError
from .tolerances import TOL

__all__ = [
    "FockOperator",
    "POVMSet",
    "CoherentAmplitudes",
    "coherent_amplitudes",
    "log_weight",
    "hermitize",
    "project_to_povm",
]


def log_weight(j: int, k: int, magnitude: float) -> float:
    """ln( e^{-|a|^2} |a|^{j+k} / sqrt(j! k!) ) evaluated in log space.

    Args:
        j, k: Fock indices, >= 0.
        magnitude: probe magnitude |alpha| in square-root photons, >= 0.

    Returns:
        The log weight as a float; -inf when magnitude is 0 and j+k > 0.
    """
    if j < 0 or k < 0:
        raise ValueError("Fock indices must be nonnegative")
    if magnitude < 0:
        raise ValueError("magnitude must be nonnegative")
    if magnitude == 0.0:
        return 0.0 if j + k == 0 else -np.inf
    a2 = magnitude * magnitude
    return float(
        -a2
        + (j + k) * np.log(magnitude)
        - 0.5 * (gammaln(j + 1) + gammaln(k + 1))
    )


@dataclass(frozen=True)
class FockOperator:
    """Dense Hermitian operator on the truncated Fock basis.

    Attributes:
        entries: d x d complex matrix; Hermiticity is validated on
            construction to within TOL.hermitian and the array is frozen.
    """

    entries: npt.NDArray[np.complex128]

    def __post_init__(self):
        mat = np.array(self.entries, dtype=np.complex128, copy=True, order="C")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"entries must be square, got shape {mat.shape}")
        if mat.shape[0] < 1:
            raise ValueError("dim must be >= 1")
        dev = float(np.max(np.abs(mat - mat.conj().T)))
        if dev > TOL.hermitian:
            raise ValueError(f"matrix is not Hermitian: max deviation {dev:.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def diagonal(self, l: int = 0) -> npt.NDArray[np.complex128]:
        """The l-th leading diagonal (elements pi^{j,j+l})."""
        return np.diagonal(self.entries, offset=l)

    def eigenvalues(self) -> npt.NDArray[np.float64]:
        return np.linalg.eigvalsh(self.entries)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.entries.real.tolist(),
            "im": self.entries.imag.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "FockOperator":
        d = int(obj["dim"])
        mat = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        if mat.shape != (d, d):
            raise ValueError(f"declared dim {d} does not match matrix shape {mat.shape}")
        return cls(mat)

    @classmethod
    def from_json(cls, text: str) -> "FockOperator":
        return cls.from_dict(json.loads(text))

    @classmethod
    def identity(cls, dim: int) -> "FockOperator":
        return cls(np.eye(dim, dtype=np.complex128))


def hermitize(entries: npt.NDArray | FockOperator) -> FockOperator:
    """Return (A + A^dag)/2 as a FockOperator. Idempotent."""
    mat = entries.entries if isinstance(entries, FockOperator) else np.asarray(entries)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"cannot hermitize non-square matrix of shape {mat.shape}")
    return FockOperator(0.5 * (mat + mat.conj().T))


@dataclass(frozen=True)
class POVMSet:
    """Ordered collection of POVM elements on a shared truncated basis.

    Invariants (validated on construction): all elements share one dim,
    each is PSD to within TOL.psd, and sum_n Pi_n = I element-wise to
    within TOL.completeness.
    """

    outcomes: tuple[FockOperator, ...]

    def __post_init__(self):
        outs = tuple(self.outcomes)
        if len(outs) < 1:
            raise ValueError("POVMSet needs at least one outcome")
        d = outs[0].dim
        if any(op.dim != d for op in outs):
            raise ValueError("all POVM elements must share one dim")
        object.__setattr__(self, "outcomes", outs)
        self.validate()

    @property
    def dim(self) -> int:
        return self.outcomes[0].dim

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def min_eigenvalue(self) -> float:
        return min(op.min_eigenvalue() for op in self.outcomes)

    def completeness_defect(self) -> float:
        total = sum(op.entries for op in self.outcomes)
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def validate(self, psd_tol: float = TOL.psd, completeness_tol: float = TOL.completeness):
        mineig = self.min_eigenvalue()
        if mineig < -psd_tol:
            raise ModelInvalidError(
                f"POVM element not positive semidefinite: min eigenvalue {mineig:.3e}"
            )
        defect = self.completeness_defect()
        if defect > completeness_tol:
            raise ModelInvalidError(f"POVM completeness defect {defect:.3e}")

    def to_dict(self) -> dict:
        return {"outcomes": [op.to_dict() for op in self.outcomes]}

    @classmethod
    def from_dict(cls, obj: dict) -> "POVMSet":
        return cls(tuple(FockOperator.from_dict(o) for o in obj["outcomes"]))


@dataclass(frozen=True)
class CoherentAmplitudes:
    """Fock coefficients of a truncated coherent state |alpha>.

    coeffs[j] = exp(-|a|^2/2) |a|^j / sqrt(j!) exp(i j theta); ``tail`` is
    the Poisson mass beyond photon number d-1, reported rather than
    silently renormalized.
    """

    magnitude: float
    phase: float
    coeffs: npt.NDArray[np.complex128] = field(repr=False)
    tail: float

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]


def coherent_amplitudes(magnitude: float, phase: float, dim: int) -> CoherentAmplitudes:
    """Truncated coherent-state coefficient vector, computed in log space.

    Args:
        magnitude: |alpha| >= 0 in square-root photons.
        phase: theta in radians (normalized into [0, 2pi)).
        dim: truncation d >= 1.

    Returns:
        CoherentAmplitudes with coeffs of length dim and the Poisson tail
        mass beyond photon number dim-1.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be nonnegative")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    phase = float(np.mod(phase, 2.0 * np.pi))
    j = np.arange(dim)
    if magnitude == 0.0:
        coeffs = np.zeros(dim, dtype=np.complex128)
        coeffs[0] = 1.0
        tail = 0.0
    else:
        a2 = magnitude * magnitude
        log_mod = -0.5 * a2 + j * np.log(magnitude) - 0.5 * gammaln(j + 1)
        coeffs = np.exp(log_mod) * np.exp(1j * j * phase)
        tail = float(poisson.sf(dim - 1, a2))
    coeffs.setflags(write=False)
    return CoherentAmplitudes(float(magnitude), phase, coeffs, tail)


def _clip_psd(mat: npt.NDArray, lo: float = 0.0, hi: float | None = None) -> npt.NDArray:
    """Eigenvalue clip of a Hermitian matrix into [lo, hi]."""
    w, vec = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    w = np.clip(w, lo, hi)
    return (vec * w) @ vec.conj().T


def project_to_povm(
    mats: list[npt.NDArray], max_iter: int = 500, tol: float = 1e-10
) -> list[npt.NDArray[np.complex128]]:
    """Nearest POVM (Frobenius) to a list of Hermitian matrices.

    For two outcomes the optimum is closed-form: clip the eigenvalues of the
    midpoint (M0 + I - M1)/2 into [0, 1] and take the complement. For more
    outcomes, Dykstra's alternating projection between the per-element PSD
    cones and the completeness plane sum_n X_n = I.
    """
    mats = [np.asarray(m, dtype=complex) for m in mats]
    d = mats[0].shape[0]
    eye = np.eye(d)
    if len(mats) == 2:
        mid = 0.5 * (mats[0] + eye - mats[1])
        first = _clip_psd(mid, 0.0, 1.0)
        return [first, eye - first]
    x = [0.5 * (m + m.conj().T) for m in mats]
    incr = [np.zeros_like(m) for m in x]
    for _ in range(max_iter):
        shift = (sum(x) - eye) / len(x)
        x = [m - shift for m in x]
        moved = 0.0
        for n, m in enumerate(x):
            target = m + incr[n]
            proj = _clip_psd(target)
            incr[n] = target - proj
            moved = max(moved, float(np.linalg.norm(proj - x[n])))
            x[n] = proj
        if moved < tol:
            break
    shift = (sum(x) - eye) / len(x)
    return [m - shift for m in x]
