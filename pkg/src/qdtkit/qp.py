"""Constrained least-squares core used by the diagonal recursion.

Solves, over a real matrix X of shape (V, N),

    minimize  ||A X - B||_F + gamma * ||D X||_F^2
    s.t.      sum_n X[j, n] = e[j]        for every coordinate j
              lo[j, n] <= X[j, n] <= hi[j, n]

where D is a first-difference smoothing operator along each column. The
data misfit enters through its norm (not its square), so gamma trades off
against the residual magnitude directly.

The solver is an operator-splitting (ADMM) loop with exact per-coordinate
projections, followed by an active-set polish that solves the reduced KKT
system to machine precision when it can. No external optimizer is used.
Everything is deterministic: the same problem yields bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.linalg import cho_factor, cho_solve

from .errors import InfeasibleProblemError, SolverError
from .tolerances import TOL

__all__ = [
    "QuadraticProblem",
    "Solution",
    "first_difference",
    "project_rows",
    "solve",
    "kkt_residual",
]

_TINY = 1e-300


def first_difference(size: int) -> npt.NDArray[np.float64]:
    """Smoothing operator: (Dx)[j] = x[j+1] - x[j], shape (size-1, size)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    d = np.zeros((size - 1, size))
    idx = np.arange(size - 1)
    d[idx, idx] = -1.0
    d[idx, idx + 1] = 1.0
    return d


@dataclass(frozen=True)
class QuadraticProblem:
    """Problem data. Shapes: design (M, V), targets (M, N), equality (V,),
    lower/upper broadcastable to (V, N). smoothing defaults to the
    first-difference operator on V coordinates."""

    design: npt.NDArray[np.float64]
    targets: npt.NDArray[np.float64]
    tikhonov_weight: float = 0.0
    smoothing: npt.NDArray[np.float64] | None = None
    equality: npt.NDArray[np.float64] | None = None
    lower: npt.NDArray[np.float64] | float = -np.inf
    upper: npt.NDArray[np.float64] | float = np.inf

    def __post_init__(self):
        a = np.asarray(self.design, dtype=float)
        b = np.asarray(self.targets, dtype=float)
        if a.ndim != 2:
            raise ValueError("design must be 2-D")
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ValueError(f"targets shape {b.shape} does not match design {a.shape}")
        v, n = a.shape[1], b.shape[1]
        if self.tikhonov_weight < 0:
            raise ValueError("tikhonov_weight must be >= 0")
        d = self.smoothing
        d = first_difference(v) if d is None else np.asarray(d, dtype=float)
        if d.ndim != 2 or d.shape[1] != v:
            raise ValueError("smoothing operator must have V columns")
        e = self.equality
        e = np.asarray(e, dtype=float) if e is not None else None
        if e is not None and (e.shape != (v,) or not np.all(np.isfinite(e))):
            raise ValueError("equality must be a finite vector of length V")
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (v, n)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (v, n)).copy()
        if np.any(lo > hi):
            j, k = np.argwhere(lo > hi)[0]
            raise InfeasibleProblemError(
                f"empty box at coordinate ({j}, {k})",
                certificate={"coordinate": (int(j), int(k)),
                             "lower": float(lo[j, k]), "upper": float(hi[j, k])},
            )
        if e is not None:
            slo, shi = lo.sum(axis=1), hi.sum(axis=1)
            bad = (slo > e + 1e-12) | (shi < e - 1e-12)
            if np.any(bad):
                j = int(np.argmax(bad))
                raise InfeasibleProblemError(
                    f"equality target at coordinate {j} outside box sum range",
                    certificate={"coordinate": j, "sum_lower": float(slo[j]),
                                 "sum_upper": float(shi[j]),
                                 "equality_target": float(e[j])},
                )
        for arr in (a, b, d, lo, hi):
            arr.setflags(write=False)
        if e is not None:
            e.setflags(write=False)
        object.__setattr__(self, "design", a)
        object.__setattr__(self, "targets", b)
        object.__setattr__(self, "smoothing", d)
        object.__setattr__(self, "equality", e)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_coordinates(self) -> int:
        return self.design.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.targets.shape[1]

    def objective(self, x: npt.NDArray[np.float64]) -> float:
        x = np.asarray(x, dtype=float)
        misfit = np.linalg.norm(self.design @ x - self.targets)
        smooth = np.linalg.norm(self.smoothing @ x) ** 2
        return float(misfit + self.tikhonov_weight * smooth)


@dataclass(frozen=True)
class Solution:
    x: npt.NDArray[np.float64] = field(repr=False)
    objective: float
    kkt_residual: float
    iterations: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


def project_rows(
    x: npt.NDArray[np.float64],
    lower: npt.NDArray[np.float64],
    upper: npt.NDArray[np.float64],
    equality: npt.NDArray[np.float64] | None,
) -> npt.NDArray[np.float64]:
    """Euclidean projection onto the box, intersected per coordinate j with
    the plane sum_n y[j, n] = equality[j] when given."""
    x = np.asarray(x, dtype=float)
    if equality is None:
        return np.clip(x, lower, upper)
    v, n = x.shape
    if n == 2:
        # substitute y1 = e - y0; the optimum is the midpoint shift, clipped
        left = np.maximum(lower[:, 0], equality - upper[:, 1])
        right = np.minimum(upper[:, 0], equality - lower[:, 1])
        y0 = np.clip((x[:, 0] - x[:, 1] + equality) / 2.0, left, right)
        return np.stack([y0, equality - y0], axis=1)
    out = np.empty_like(x)
    for j in range(v):
        out[j] = _project_row(x[j], lower[j], upper[j], float(equality[j]))
    return out


def _project_row(t, lo, hi, e):
    """Project t onto {y : sum(y) = e, lo <= y <= hi}.

    The sum of clip(t - nu, lo, hi) is piecewise linear and nonincreasing in
    nu, so the root is found exactly from the sorted breakpoints.
    """
    bp = np.sort(np.concatenate([t - hi, t - lo]))
    with np.errstate(invalid="ignore"):
        vals = np.clip(t[None, :] - bp[:, None], lo[None, :], hi[None, :]).sum(axis=1)
    if vals[0] <= e:
        return np.clip(t - bp[0], lo, hi)
    hits = np.nonzero(vals <= e)[0]
    if hits.size == 0:
        # only reachable when e ~ sum(lo) up to roundoff
        return np.clip(t - bp[-1], lo, hi)
    k = int(hits[0])
    left, right, fl, fr = bp[k - 1], bp[k], vals[k - 1], vals[k]
    if np.isfinite(left) and np.isfinite(right):
        nu = left + (e - fl) * (right - left) / (fr - fl)
    else:
        free = (t - hi <= left) & (t - lo >= right)
        m = max(int(free.sum()), 1)
        if np.isfinite(right):
            nu = right - (e - fr) / m
        elif np.isfinite(left):
            nu = left + (fl - e) / m
        else:
            nu = (t.sum() - e) / t.size
    return np.clip(t - nu, lo, hi)


def _ball_subgradient(a, g):
    """argmin_{||v|| <= 1} ||A^T v + g||, returned as the A^T v term.

    Via the SVD of A the problem separates per singular direction into a
    ridge shrinkage whose multiplier is fixed by a scalar root find.
    """
    u_mat, s, vt = np.linalg.svd(a, full_matrices=False)
    h = vt @ g  # (k, N)
    keep = s > 1e-14 * (s[0] if s.size else 1.0)
    s, h_keep = s[keep], h[keep]
    if s.size == 0:
        return np.zeros_like(g)
    c = -h_keep / s[:, None]
    norm2 = float((c * c).sum())
    if norm2 > 1.0:
        def excess(lam):
            ci = -(s[:, None] * h_keep) / (s * s + lam)[:, None]
            return float((ci * ci).sum()) - 1.0
        lo_l, hi_l = 0.0, float(s.max() * np.linalg.norm(h_keep))
        while excess(hi_l) > 0:
            hi_l *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo_l + hi_l)
            if excess(mid) > 0:
                lo_l = mid
            else:
                hi_l = mid
        c = -(s[:, None] * h_keep) / (s * s + hi_l)[:, None]
    out = np.zeros_like(h)
    out[keep] = s[:, None] * c
    return vt.T @ out


def kkt_residual(problem: QuadraticProblem, x: npt.NDArray[np.float64]) -> float:
    """Projected-gradient stationarity residual; zero iff x is optimal.

    Away from an exact fit the misfit gradient is A^T r / ||r||. When the
    residual is negligible the subdifferential is a whole ball, so the
    subgradient that best cancels the smoothing gradient is used instead;
    any misclassification there shifts the objective by less than the
    residual norm itself.
    """
    x = np.asarray(x, dtype=float)
    a, b, d = problem.design, problem.targets, problem.smoothing
    r = a @ x - b
    rnorm = np.linalg.norm(r)
    g = 2.0 * problem.tikhonov_weight * (d.T @ (d @ x))
    if rnorm > 1e-9 * (1.0 + np.linalg.norm(b)):
        g = g + a.T @ r / rnorm
    else:
        g = g + _ball_subgradient(a, g)
    proj = project_rows(x - g, problem.lower, problem.upper, problem.equality)
    return float(np.linalg.norm(x - proj))


def _constraint_violation(problem, x):
    box = np.maximum(problem.lower - x, 0.0) + np.maximum(x - problem.upper, 0.0)
    worst = box.max() if box.size else 0.0
    if problem.equality is not None:
        worst = max(worst, np.abs(x.sum(axis=1) - problem.equality).max())
    return float(worst)


def _polish(problem, x0, rho0):
    """Active-set refinement: fix near-active box entries, solve the reduced
    KKT system with the misfit norm linearized at the current residual scale,
    and iterate the scale to its fixed point. Returns None if no feasible
    improvement is found."""
    a, b = problem.design, problem.targets
    d, gamma = problem.smoothing, problem.tikhonov_weight
    v, n = x0.shape
    lo, hi, e = problem.lower, problem.upper, problem.equality
    ata, dtd = a.T @ a, d.T @ d
    scale = max(1.0, float(np.abs(x0).max()))
    active_lo = x0 <= lo + 1e-7 * scale
    active_hi = (x0 >= hi - 1e-7 * scale) & ~active_lo
    rho = rho0
    x = x0
    for _ in range(40):
        fixed = active_lo | active_hi
        xfix = np.where(active_lo, lo, 0.0) + np.where(active_hi, hi, 0.0)
        free = ~fixed
        nf = int(free.sum())
        if nf == 0:
            x = xfix
            break
        pos = -np.ones((v, n), dtype=int)
        pos[free] = np.arange(nf)
        block = ata / rho + 2.0 * gamma * dtd
        g0 = -(a.T @ b) / rho  # (V, N)
        rows_e = [j for j in range(v) if free[j].any()] if e is not None else []
        kkt = np.zeros((nf + len(rows_e), nf + len(rows_e)))
        rhs = np.zeros(nf + len(rows_e))
        for col in range(n):
            fj = np.nonzero(free[:, col])[0]
            if fj.size == 0:
                continue
            p = pos[fj, col]
            kkt[np.ix_(p, p)] = block[np.ix_(fj, fj)]
            lin = g0[fj, col]
            kj = np.nonzero(fixed[:, col])[0]
            if kj.size:
                lin = lin + block[np.ix_(fj, kj)] @ xfix[kj, col]
            rhs[p] = -lin
        if e is not None:
            for i, j in enumerate(rows_e):
                for col in np.nonzero(free[j])[0]:
                    kkt[nf + i, pos[j, col]] = 1.0
                    kkt[pos[j, col], nf + i] = 1.0
                rhs[nf + i] = e[j] - xfix[j, ~free[j]].sum()
            # coordinates that are fully fixed must already satisfy equality
            for j in range(v):
                if not free[j].any() and abs(xfix[j].sum() - e[j]) > 1e-9:
                    return None
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x = xfix.copy()
        x[free] = sol[pos[free]]
        viol_lo = (x < lo - 1e-9) & free
        viol_hi = (x > hi + 1e-9) & free
        rho_new = max(float(np.linalg.norm(a @ x - b)), _TINY)
        if viol_lo.any() or viol_hi.any():
            active_lo |= viol_lo
            active_hi |= viol_hi
            rho = rho_new
            continue
        if abs(rho_new - rho) <= 1e-13 * (1.0 + rho_new):
            break
        rho = rho_new
    x = project_rows(x, lo, hi, e)
    if _constraint_violation(problem, x) > TOL.constraint:
        return None
    return x


def solve(
    problem: QuadraticProblem,
    tol: float = TOL.solver_tol,
    max_iter: int = TOL.solver_max_iter,
) -> Solution:
    """Minimize the constrained objective; see module docstring.

    Returns the best feasible iterate with its objective and KKT residual.
    If max_iter is reached the best iterate so far is returned; callers can
    inspect kkt_residual to judge it. Raises InfeasibleProblemError (with a
    certificate) when the constraint set is provably empty.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    a, b = problem.design, problem.targets
    d, gamma = problem.smoothing, problem.tikhonov_weight
    m, v = a.shape
    n = problem.n_outcomes
    lo, hi, e = problem.lower, problem.upper, problem.equality

    ata = a.T @ a
    dtd = d.T @ d
    rho = 1.0
    factor = cho_factor(2.0 * gamma * dtd + rho * (ata + np.eye(v)))

    y = project_rows(np.zeros((v, n)), lo, hi, e)
    x = y.copy()
    z = a @ x - b
    u = np.zeros((m, n))
    w = np.zeros((v, n))

    best_x = y
    best_obj = problem.objective(y)
    eps = tol
    iterations = 0
    last_improvement = 0
    for it in range(1, max_iter + 1):
        iterations = it
        rhs = rho * (a.T @ (b + z - u) + (y - w))
        x = cho_solve(factor, rhs)
        ax = a @ x
        s = ax - b + u
        snorm = np.linalg.norm(s)
        z_new = s * max(1.0 - 1.0 / (rho * snorm), 0.0) if snorm > _TINY else np.zeros_like(s)
        y_new = project_rows(x + w, lo, hi, e)
        u = u + ax - b - z_new
        w = w + x - y_new
        r_pri = np.sqrt(np.linalg.norm(ax - b - z_new) ** 2 + np.linalg.norm(x - y_new) ** 2)
        r_dual = rho * np.sqrt(
            np.linalg.norm(a.T @ (z_new - z)) ** 2 + np.linalg.norm(y_new - y) ** 2
        )
        z, y = z_new, y_new
        obj = problem.objective(y)
        if obj < best_obj * (1.0 - 1e-12):
            best_obj, best_x, last_improvement = obj, y, it
        elif obj < best_obj:
            best_obj, best_x = obj, y
        scale_pri = max(np.linalg.norm(ax), np.linalg.norm(z) + np.linalg.norm(b),
                        np.linalg.norm(x), np.linalg.norm(y), 1.0)
        scale_dual = rho * max(np.linalg.norm(a.T @ u), np.linalg.norm(w), 1.0)
        if r_pri <= eps * scale_pri and r_dual <= eps * scale_dual:
            break
        # the polish needs only a good active-set guess; stop grinding once
        # the objective has plateaued
        if it - last_improvement > 500:
            break
        if it % 5 == 0:
            if r_pri > 10.0 * r_dual and rho < 1e6:
                rho *= 2.0
                u /= 2.0
                w /= 2.0
                factor = cho_factor(2.0 * gamma * dtd + rho * (ata + np.eye(v)))
            elif r_dual > 10.0 * r_pri and rho > 1e-6:
                rho /= 2.0
                u *= 2.0
                w *= 2.0
                factor = cho_factor(2.0 * gamma * dtd + rho * (ata + np.eye(v)))

    resid = float(np.linalg.norm(a @ best_x - b))
    if resid > 1e-12 * (1.0 + np.linalg.norm(b)):
        polished = _polish(problem, best_x, resid)
        if polished is not None:
            pobj = problem.objective(polished)
            if pobj <= best_obj * (1.0 + 1e-12) + 1e-15:
                best_x, best_obj = polished, pobj

    if _constraint_violation(problem, best_x) > TOL.constraint:
        raise SolverError("solver left the feasible set; problem is badly scaled")
    return Solution(
        x=best_x,
        objective=best_obj,
        kkt_residual=kkt_residual(problem, best_x),
        iterations=iterations,
    )
