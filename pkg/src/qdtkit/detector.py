"""Ground-truth POVM of a weak-field homodyne click detector.

The signal mode interferes with a local oscillator alpha_L on a beam
splitter; a click/no-click APD with quantum efficiency eta_apd monitors one
output port, the other port is discarded. R is the fraction of LO power
reaching the APD port, so the overall detection efficiency for the signal
is (1-R)*eta_apd.

Port convention (a phase choice, not physics): the monitored port carries
sqrt(R)*alpha_L + sqrt(1-R)*a, the discarded port sqrt(R)*a -
sqrt(1-R)*alpha_L. The no-click element is the double series over photon
numbers (c, d) at the two ports, each term weighted by (1-eta_apd)^c and
expanded binomially onto the truncated Fock basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import ModelInvalidError, SeriesTruncationError
from .fock import FockOperator, POVMSet, hermitize
from .tolerances import TOL

__all__ = [
    "DetectorSpec",
    "build_no_click_povm",
    "click_povm",
    "build_povm",
    "q_oracle",
]


@dataclass(frozen=True)
class DetectorSpec:
    """Physical parameters of the simulated detector.

    Attributes:
        reflectivity: R in [0,1], fraction of LO power reaching the APD port.
        eta_apd: APD quantum efficiency in [0,1].
        lo_amplitude: LO amplitude alpha_L (square-root photons), complex.
        dim: Fock truncation d.
    """

    reflectivity: float
    eta_apd: float
    lo_amplitude: complex
    dim: int

    def __post_init__(self):
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity must be in [0,1], got {self.reflectivity}")
        if not 0.0 <= self.eta_apd <= 1.0:
            raise ValueError(f"eta_apd must be in [0,1], got {self.eta_apd}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def overall_efficiency(self) -> float:
        """Detection efficiency seen by the signal: (1-R)*eta_apd."""
        return (1.0 - self.reflectivity) * self.eta_apd


def q_oracle(spec: DetectorSpec, alpha: complex) -> float:
    """Closed-form no-click probability for a coherent probe.

    The monitored port sees the coherent amplitude sqrt(1-R)*alpha +
    sqrt(R)*alpha_L; an efficiency-eta APD stays silent on a coherent state
    mu with probability exp(-eta |mu|^2). Independent of the series
    construction, which makes it a cross-check for build_no_click_povm.
    """
    mu = np.sqrt(1.0 - spec.reflectivity) * alpha + np.sqrt(spec.reflectivity) * spec.lo_amplitude
    return float(np.exp(-spec.eta_apd * abs(mu) ** 2))


def _default_shell_cap(spec: DetectorSpec, series_tolerance: float) -> int:
    # Terms at two-port photon total s only reach Fock row j <= s, so shells
    # must run past dim-1 plus the LO Poisson tail at the target tolerance.
    a2 = abs(spec.lo_amplitude) ** 2
    if a2 == 0.0:
        extra = 0
    else:
        extra = int(poisson.isf(series_tolerance / (10.0 * spec.dim), a2)) + 5
    return spec.dim - 1 + extra + 10


def build_no_click_povm(
    spec: DetectorSpec,
    series_tolerance: float = TOL.series,
    max_shells: int | None = None,
) -> FockOperator:
    """Assemble Pi_0 by the generalized two-port double series.

    Each (c, d) term is a rank-one operator |v_cd><v_cd| weighted by
    (1-eta_apd)^c, where v_cd is the Fock expansion of the two port
    creation polynomials applied to vacuum. With eta_apd = 0 the weighted
    sum telescopes to the identity, so the truncation error operator is PSD
    and bounded by the trace deficiency dim - sum ||v_cd||^2; the shell sum
    stops once that certified bound drops below series_tolerance.

    Args:
        spec: detector parameters.
        series_tolerance: certified operator-norm bound on the dropped tail.
        max_shells: cap on c+d (defaults to a Poisson-tail based estimate).

    Returns:
        Pi_0 as a hermitized FockOperator.

    Raises:
        SeriesTruncationError: the cap was hit before the bound was met.
    """
    if series_tolerance <= 0:
        raise ValueError("series_tolerance must be positive")
    d = spec.dim
    al_conj = np.conj(complex(spec.lo_amplitude))
    sr = np.sqrt(spec.reflectivity)
    st = np.sqrt(1.0 - spec.reflectivity)
    # creation-operator polynomials of the two ports, coefficients in x = a^dag
    base1 = np.array([sr * al_conj, st], dtype=np.complex128)    # monitored
    base2 = np.array([-st * al_conj, sr], dtype=np.complex128)   # discarded
    cap = _default_shell_cap(spec, series_tolerance) if max_shells is None else int(max_shells)

    a2 = abs(spec.lo_amplitude) ** 2
    half_log_fact = 0.5 * gammaln(np.arange(d) + 1.0)
    one_minus_eta = 1.0 - spec.eta_apd

    # incrementally grown polynomial powers, truncated at dim coefficients
    pow1: list[np.ndarray] = [np.ones(1, dtype=np.complex128)]
    pow2: list[np.ndarray] = [np.ones(1, dtype=np.complex128)]

    vectors: list[np.ndarray] = []
    weights: list[float] = []
    captured = 0.0
    deficiency = float(d)

    for s in range(cap + 1):
        if s > 0:
            pow1.append(np.convolve(pow1[-1], base1)[: d + 1])
            pow2.append(np.convolve(pow2[-1], base2)[: d + 1])
        for c in range(s + 1):
            dd = s - c
            coeffs = np.convolve(pow1[c], pow2[dd])[:d]
            m = coeffs.shape[0]
            log_pref = -0.5 * a2 - 0.5 * (gammaln(c + 1) + gammaln(dd + 1))
            v = coeffs * np.exp(log_pref + half_log_fact[:m])
            if m < d:
                v = np.pad(v, (0, d - m))
            norm2 = float(np.real(np.vdot(v, v)))
            captured += norm2
            vectors.append(v)
            weights.append(one_minus_eta**c)
        deficiency = d - captured
        if deficiency < series_tolerance:
            break
    else:
        raise SeriesTruncationError(
            f"no-click series not converged after {cap} shells "
            f"(certified bound {deficiency:.3e} > {series_tolerance:.3e})",
            achieved_bound=deficiency,
        )

    vmat = np.vstack(vectors)
    w = np.asarray(weights)
    pi0 = (vmat * w[:, None]).T @ vmat.conj()
    return hermitize(pi0)


def click_povm(no_click: FockOperator) -> FockOperator:
    """Pi_1 = I - Pi_0, guaranteeing exact completeness of the pair."""
    eigs = no_click.eigenvalues()
    if eigs[0] < -TOL.psd or eigs[-1] > 1.0 + TOL.psd:
        raise ModelInvalidError(
            f"no-click element has eigenvalues outside [0,1]: "
            f"range [{eigs[0]:.3e}, {eigs[-1]:.6f}]"
        )
    return FockOperator(np.eye(no_click.dim) - no_click.entries)


def build_povm(spec: DetectorSpec, series_tolerance: float = TOL.series) -> POVMSet:
    """Ground-truth {Pi_0, Pi_1} for the given detector."""
    pi0 = build_no_click_povm(spec, series_tolerance)
    return POVMSet((pi0, click_povm(pi0)))
