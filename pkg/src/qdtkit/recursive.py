"""Diagonal-by-diagonal POVM reconstruction.

The detector POVM is recovered one Fock-basis diagonal at a time. Phase
averaging of the probe data isolates the l-th diagonal of every element;
a Poisson-weight design matrix links that diagonal to the averaged data;
and positivity of each element is enforced through interval bounds on the
new entries, derived from determinants of the bordered submatrices whose
other entries are already known. Each step is a small constrained
least-squares problem; the recursion is sequential in l.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from . import qp
from .errors import InconsistentStateError, SolverError
from .fock import FockOperator, POVMSet, hermitize, log_weight, project_to_povm
from .probes import ProbeGrid
from .tolerances import TOL

__all__ = [
    "FourierAveragedData",
    "DiagonalDesign",
    "ReconConfig",
    "ReconstructionState",
    "fourier_average",
    "build_design",
    "sylvester_bounds",
    "reconstruct_diagonal",
    "run_recursion",
    "estimate_l_max",
    "AUTO_DEPTH_THRESHOLD",
]

# Envelope level below which a diagonal is not worth reconstructing when
# the caller leaves the depth unspecified.
AUTO_DEPTH_THRESHOLD = 1e-3


@dataclass(frozen=True)
class FourierAveragedData:
    """Phase-averaged data isolating the l-th diagonal.

    values[u, n] = (1/M_p) sum_v freqs[u, v, n] exp(-i l theta_v); for l=0
    this is the plain phase average and must be real in [0, 1].
    """

    l: int
    values: npt.NDArray[np.complex128] = field(repr=False)

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("l must be >= 0")
        vals = np.asarray(self.values, dtype=np.complex128)
        if self.l == 0:
            if np.abs(vals.imag).max(initial=0.0) > 1e-12:
                raise ValueError("l=0 averages must be real")
            if vals.real.min(initial=0.0) < -1e-12 or vals.real.max(initial=0.0) > 1 + 1e-12:
                raise ValueError("l=0 averages must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class DiagonalDesign:
    """Design matrix for the l-th diagonal: F[u, j] = weight(j, j+l, |alpha_u|).

    Entries are nonnegative Poisson-type weights, evaluated in log space.
    The condition number is recorded for the run report.
    """

    l: int
    matrix: npt.NDArray[np.float64] = field(repr=False)
    condition: float

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class ReconConfig:
    """Knobs for one reconstruction run.

    Attributes:
        dim: Fock truncation d.
        gamma: Tikhonov weight on first differences along each diagonal.
        l_max: highest diagonal to reconstruct; higher ones are zero. None
            picks the depth automatically after the main-diagonal solve,
            via estimate_l_max at the default threshold.
        solver_tol / solver_max_iter: passed through to the inner solver.
        eps_pos: slack added to every interval bound to absorb determinant
            roundoff.
    """

    dim: int
    gamma: float = 1.0
    l_max: int | None = None
    solver_tol: float = TOL.solver_tol
    solver_max_iter: int = TOL.solver_max_iter
    eps_pos: float = TOL.bound_slack

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.l_max is not None and not 0 <= self.l_max <= self.dim - 1:
            raise ValueError(f"l_max must be in [0, {self.dim - 1}]")
        if self.eps_pos < 0:
            raise ValueError("eps_pos must be >= 0")


@dataclass
class ReconstructionState:
    """Mutable partial reconstruction: diagonals 0..l filled so far.

    matrices holds one dense complex work buffer per outcome; records
    carries the per-l solve reports that end up in the run summary.
    """

    dim: int
    n_outcomes: int
    matrices: list[npt.NDArray[np.complex128]]
    filled: list[int] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    eps_pos: float = TOL.bound_slack
    zero_diag_tol: float = TOL.zero_diag

    @classmethod
    def empty(
        cls,
        dim: int,
        n_outcomes: int,
        eps_pos: float = TOL.bound_slack,
        zero_diag_tol: float = TOL.zero_diag,
    ) -> "ReconstructionState":
        mats = [np.zeros((dim, dim), dtype=np.complex128) for _ in range(n_outcomes)]
        return cls(dim, n_outcomes, mats, eps_pos=eps_pos, zero_diag_tol=zero_diag_tol)

    def diagonal(self, n: int, l: int) -> npt.NDArray[np.complex128]:
        return np.diagonal(self.matrices[n], offset=l).copy()

    def set_diagonal(self, n: int, l: int, values: npt.NDArray):
        """Write the l-th diagonal and its conjugate mirror."""
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (self.dim - l,):
            raise ValueError(f"expected {self.dim - l} entries for diagonal {l}")
        idx = np.arange(self.dim - l)
        self.matrices[n][idx, idx + l] = values
        if l > 0:
            self.matrices[n][idx + l, idx] = values.conj()

    def window(self, n: int, j: int, l: int) -> npt.NDArray[np.complex128]:
        """Copy of the (l+1) x (l+1) submatrix spanning rows/cols j..j+l."""
        return self.matrices[n][j : j + l + 1, j : j + l + 1].copy()


def fourier_average(
    freqs: npt.NDArray[np.float64], grid: ProbeGrid, l: int
) -> FourierAveragedData:
    """Average e^{-il theta} against the per-probe frequencies.

    Args:
        freqs: relative frequencies, shape (M_a, M_p, N).
        grid: the probe lattice the frequencies were taken on.
        l: diagonal index >= 0.
    """
    freqs = np.asarray(freqs, dtype=float)
    expected = (grid.n_magnitudes, grid.phases_per_magnitude)
    if freqs.ndim != 3 or freqs.shape[:2] != expected:
        raise ValueError(f"frequency shape {freqs.shape} does not match grid {expected}")
    kernel = np.exp(-1j * l * grid.phases())
    vals = np.tensordot(freqs, kernel, axes=([1], [0])) / grid.phases_per_magnitude
    if l == 0:
        vals = vals.real.clip(0.0, 1.0).astype(np.complex128)
    return FourierAveragedData(l, vals)


def build_design(grid: ProbeGrid, l: int, dim: int) -> DiagonalDesign:
    """Poisson-weight design matrix of shape (M_a, dim - l)."""
    if not 0 <= l < dim:
        raise ValueError("need 0 <= l < dim")
    mat = np.empty((grid.n_magnitudes, dim - l))
    for u, mag in enumerate(grid.magnitudes):
        mat[u] = [np.exp(log_weight(j, j + l, mag)) for j in range(dim - l)]
    cond = float(np.linalg.cond(mat)) if min(mat.shape) > 0 else np.inf
    return DiagonalDesign(l, mat, cond)


def _window_det(window: npt.NDArray, corner: complex) -> float:
    w = window.copy()
    w[0, -1] = corner
    w[-1, 0] = np.conj(corner)
    return float(np.linalg.det(w).real)


def sylvester_bounds(
    state: ReconstructionState, l: int, j: int, n: int, phase_direction: complex
) -> tuple[float, float]:
    """Interval of allowed magnitudes t for the entry at (j, j+l).

    Writing the unknown as t * phase_direction with t real, the determinant
    of the bordered (l+1) x (l+1) submatrix is a quadratic A t^2 + B t + C,
    with coefficients read off from evaluations at t = 0, +1, -1. The
    determinant must stay nonnegative, so the allowed set is the root
    interval, widened by eps_pos and intersected with the two-by-two minor
    envelope |t| <= sqrt(pi_jj * pi_kk).

    A zero diagonal endpoint forces t = 0 exactly. A significantly positive
    quadratic coefficient cannot arise from a consistent partial state and
    raises InconsistentStateError.
    """
    if not 1 <= l <= state.dim - 1:
        raise ValueError("l must be in [1, dim-1]")
    if not 0 <= j <= state.dim - 1 - l:
        raise ValueError("j out of range for this diagonal")
    u = complex(phase_direction)
    if abs(abs(u) - 1.0) > 1e-9:
        raise ValueError("phase_direction must be a unit complex number")
    mat = state.matrices[n]
    d0 = float(mat[j, j].real)
    d1 = float(mat[j + l, j + l].real)
    if d0 <= state.zero_diag_tol or d1 <= state.zero_diag_tol:
        return (0.0, 0.0)
    env = float(np.sqrt(d0 * d1)) + state.eps_pos

    win = state.window(n, j, l)
    det0 = _window_det(win, 0.0)
    det_p = _window_det(win, u)
    det_m = _window_det(win, -u)
    a = 0.5 * (det_p + det_m) - det0
    b = 0.5 * (det_p - det_m)
    c = det0
    # Noisy data legitimately leaves earlier minors slightly negative (and
    # the effect cascades), so a positive quadratic coefficient is only
    # evidence of corruption when it is far above anything noise produces.
    scale = max(1.0, float(np.linalg.norm(win)))
    noise = 100.0 * (state.eps_pos + 1e-14) * (l + 1) ** 2 * scale**l
    gross = 0.01 * scale ** (l + 1)
    if a > gross:
        raise InconsistentStateError(
            f"determinant grows with |t|^2 at (l={l}, j={j}, n={n}); "
            "previously filled diagonals violate positivity"
        )
    if a > noise:
        # mildly positive from cascaded noise: the determinant constraint is
        # unreliable here, keep only the envelope
        return (-env, env)
    if abs(a) <= noise:
        if abs(b) <= noise:
            # flat determinant: no information on t beyond the envelope
            # (when c is negative no t makes the window nonnegative, which
            # earlier-level noise legitimately produces; the data picks t
            # and the final projection absorbs the debt)
            return (-env, env)
        root = -c / b
        lo, hi = (root, env) if b > 0 else (-env, root)
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            lo = hi = -b / (2.0 * a)
        else:
            sq = float(np.sqrt(disc))
            r1 = (-b + sq) / (2.0 * a)
            r2 = (-b - sq) / (2.0 * a)
            lo, hi = min(r1, r2), max(r1, r2)
    lo = max(lo - state.eps_pos, -env)
    hi = min(hi + state.eps_pos, env)
    if lo > hi:
        # noise pushed the two positivity conditions apart; pin to the
        # envelope point nearest the root interval
        pin = env if lo > env else -env
        lo = hi = pin
    return (float(lo), float(hi))


def _phase_directions(coeffs: npt.NDArray[np.complex128]) -> npt.NDArray[np.complex128]:
    """One frozen unit direction per coordinate j, from the dominant outcome.

    Adjacent directions are sign-aligned along j (so the first-difference
    penalty on the magnitudes tracks the penalty on the entries themselves)
    and the overall sign is fixed by pushing the first direction into the
    upper half plane. For real data this collapses to u = +1 everywhere,
    with signs carried by the magnitudes.
    """
    dom = np.argmax(np.abs(coeffs), axis=1)
    picked = coeffs[np.arange(coeffs.shape[0]), dom]
    mags = np.abs(picked)
    u = np.where(mags > 1e-300, picked / np.where(mags > 1e-300, mags, 1.0), 1.0)
    for j in range(1, u.size):
        if (u[j - 1].conjugate() * u[j]).real < 0:
            u[j] = -u[j]
    lead = u[0]
    if lead.imag < -1e-12 or (abs(lead.imag) <= 1e-12 and lead.real < 0):
        u = -u
    near_real = np.abs(u.imag) <= 1e-12
    u[near_real] = u[near_real].real
    return u


def reconstruct_diagonal(
    state: ReconstructionState, data, cfg: ReconConfig, l: int
) -> ReconstructionState:
    """Fill diagonal l of every outcome in place and append a solve record.

    data is anything with a .grid and .frequencies() of shape (M_a, M_p, N):
    a synthesized Dataset or an exact-probability stand-in.
    """
    if sorted(state.filled) != list(range(l)):
        raise ValueError(f"diagonals 0..{l - 1} must be filled before l={l}")
    started = time.perf_counter()
    grid = data.grid
    freqs = data.frequencies()
    if freqs.shape[2] != state.n_outcomes:
        raise ValueError("outcome count mismatch between data and state")
    fa = fourier_average(freqs, grid, l)
    design = build_design(grid, l, cfg.dim)
    f = design.matrix
    v = cfg.dim - l

    if l == 0:
        problem = qp.QuadraticProblem(
            design=f,
            targets=fa.values.real,
            tikhonov_weight=cfg.gamma,
            equality=np.ones(v),
            lower=0.0,
            upper=1.0,
        )
        sol = qp.solve(problem, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
        for n in range(state.n_outcomes):
            state.set_diagonal(n, 0, sol.x[:, n].astype(np.complex128))
        interval_stats = {"pinned": 0, "zero": 0, "mean_width": 1.0}
    else:
        # Direction estimate from the bound-free solve. A raw pseudoinverse
        # would amplify shot noise through the small singular values of f and
        # scramble the phases of every coefficient, so the smoothing term
        # stays on; real and imaginary parts decouple because f is real.
        loose_tol = max(cfg.solver_tol, 1e-6)
        loose_iter = min(cfg.solver_max_iter, 20_000)
        # the phases only need enough smoothing to stay off the noise floor;
        # keeping a unit lower bound here leaves the configured gamma free to
        # trade bias against variance in the magnitude fit alone
        gamma_dir = max(cfg.gamma, 1.0)
        parts = []
        for component in (fa.values.real, fa.values.imag):
            pre = qp.QuadraticProblem(
                design=f,
                targets=component,
                tikhonov_weight=gamma_dir,
                equality=np.zeros(v),
            )
            parts.append(qp.solve(pre, tol=loose_tol, max_iter=loose_iter).x)
        coeffs = parts[0] + 1j * parts[1]
        u = _phase_directions(coeffs)
        lower = np.empty((v, state.n_outcomes))
        upper = np.empty((v, state.n_outcomes))
        for j in range(v):
            for n in range(state.n_outcomes):
                lower[j, n], upper[j, n] = sylvester_bounds(state, l, j, n, u[j])
        stacked_design = np.vstack([f * u.real[None, :], f * u.imag[None, :]])
        stacked_targets = np.vstack([fa.values.real, fa.values.imag])
        problem = qp.QuadraticProblem(
            design=stacked_design,
            targets=stacked_targets,
            tikhonov_weight=cfg.gamma,
            equality=np.zeros(v),
            lower=lower,
            upper=upper,
        )
        sol = qp.solve(problem, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
        for n in range(state.n_outcomes):
            state.set_diagonal(n, l, sol.x[:, n] * u)
        widths = upper - lower
        interval_stats = {
            "pinned": int((widths <= 0).sum()),
            "zero": int(((lower == 0.0) & (upper == 0.0)).sum()),
            "mean_width": float(widths.mean()),
        }

    state.filled.append(l)
    state.records.append(
        {
            "l": l,
            "objective": sol.objective,
            "kkt_residual": sol.kkt_residual,
            "iterations": sol.iterations,
            "condition": design.condition,
            "intervals": interval_stats,
            "seconds": time.perf_counter() - started,
        }
    )
    return state


def run_recursion(data, cfg: ReconConfig) -> tuple[POVMSet, dict]:
    """Reconstruct diagonals 0..l_max and assemble a physical POVM.

    Diagonals beyond l_max stay zero. When cfg.l_max is None the depth is
    chosen after the main-diagonal solve by estimate_l_max, so strongly
    off-diagonal detectors get the depth they need and near-diagonal ones
    stop early. The depth is additionally capped at
    (M_p - 1) // 2: on an M_p-point phase grid the Fourier averages at l and
    M_p - l are complex conjugates of each other, so deeper diagonals would
    re-fit data already spent on shallower ones. The assembled elements are
    projected to the nearest POVM (the interval chain keeps every bordered
    submatrix nonnegative, but not every principal minor); the report
    records the distance moved and the smallest eigenvalue before
    projection, along with the per-l solve records and the envelope mass
    left unreconstructed.

    On solver failure the partial state is attached to the raised error as
    .partial_state.
    """
    n_outcomes = data.frequencies().shape[2]
    state = ReconstructionState.empty(cfg.dim, n_outcomes, eps_pos=cfg.eps_pos)
    started = time.perf_counter()
    cap = (data.grid.phases_per_magnitude - 1) // 2
    try:
        reconstruct_diagonal(state, data, cfg, 0)
        if cfg.l_max is None:
            requested = estimate_l_max(state, AUTO_DEPTH_THRESHOLD)
        else:
            requested = cfg.l_max
        l_max = min(requested, cap)
        for l in range(1, l_max + 1):
            reconstruct_diagonal(state, data, cfg, l)
    except SolverError as err:
        err.partial_state = state
        raise
    raw = [hermitize(m).entries for m in state.matrices]
    pre_min_eig = min(float(np.linalg.eigvalsh(m).min()) for m in raw)
    projected = project_to_povm(raw)
    distance = max(
        float(np.linalg.norm(p - r)) for p, r in zip(projected, raw)
    )
    povm = POVMSet(tuple(FockOperator(p) for p in projected))
    report = {
        "dim": cfg.dim,
        "l_max": l_max,
        "requested_l_max": requested,
        "depth_estimated": cfg.l_max is None,
        "gamma": cfg.gamma,
        "per_l": state.records,
        "pre_projection_min_eigenvalue": pre_min_eig,
        "projection_distance": distance,
        "unreconstructed_envelope": _envelope_mass(state, l_max),
        "seconds": time.perf_counter() - started,
    }
    return povm, report


def _envelope_mass(state: ReconstructionState, l_max: int) -> float:
    """Largest two-by-two minor bound among the diagonals left at zero."""
    worst = 0.0
    for n in range(state.n_outcomes):
        diag = np.diagonal(state.matrices[n]).real.clip(min=0.0)
        for l in range(l_max + 1, state.dim):
            prod = np.sqrt(diag[: state.dim - l] * diag[l:])
            if prod.size:
                worst = max(worst, float(prod.max()))
    return worst


def estimate_l_max(
    state: ReconstructionState, threshold: float, jitter_width: float = 0.0
) -> int:
    """Smallest l_max beyond which every off-diagonal is provably negligible.

    The bound per entry is sqrt(pi_jj * pi_kk). For exactly two outcomes
    completeness makes the off-diagonals equal in magnitude, so each entry
    obeys both outcomes' envelopes and the smaller one governs; with more
    outcomes each entry is only bounded by its own outcome's envelope.
    When jitter_width delta > 0 the bound is further damped by the
    phase-average factor 2 exp(-l^2 delta^2 / 2). Returns the smallest
    L >= 1 such that the bound is below threshold at L and every higher
    diagonal, 0 if that holds everywhere, and dim - 1 if the bound never
    dies out.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if 0 not in state.filled:
        raise ValueError("main diagonal must be filled first")
    diags = [np.diagonal(m).real.clip(min=0.0) for m in state.matrices]
    tighten = np.minimum if state.n_outcomes == 2 else np.maximum
    bounds = np.zeros(state.dim)
    for l in range(1, state.dim):
        per_j = None
        for diag in diags:
            env = np.sqrt(diag[: state.dim - l] * diag[l:])
            per_j = env if per_j is None else tighten(per_j, env)
        factor = 1.0 if jitter_width == 0.0 else 2.0 * np.exp(-0.5 * l * l * jitter_width**2)
        bounds[l] = factor * (per_j.max() if per_j.size else 0.0)
    significant = np.nonzero(bounds >= threshold)[0]
    if significant.size == 0:
        return 0
    return int(min(significant.max() + 1, state.dim - 1))
