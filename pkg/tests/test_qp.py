"""Constrained least-squares solver: exactness, certificates, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activeset_oracle import brute_force_solve
from qdtkit import InfeasibleProblemError, QuadraticProblem, kkt_residual, solve


def random_instance(seed: int, gamma: float = 1.0) -> QuadraticProblem:
    """3 coordinates x 2 outcomes, box [0,1], per-coordinate sums fixed to 1."""
    rng = np.random.default_rng(seed)
    return QuadraticProblem(
        design=rng.normal(size=(5, 3)),
        targets=rng.normal(size=(5, 2)),
        tikhonov_weight=gamma,
        equality=np.ones(3),
        lower=0.0,
        upper=1.0,
    )


class TestTrivialInstances:
    def test_clipped_projection(self):
        problem = QuadraticProblem(
            design=np.eye(1), targets=np.array([[1.0]]), upper=0.5
        )
        sol = solve(problem)
        assert sol.x[0, 0] == pytest.approx(0.5, abs=1e-9)

    def test_feasible_target_untouched(self):
        problem = QuadraticProblem(
            design=np.eye(1),
            targets=np.array([[0.3, 0.7]]),
            equality=np.ones(1),
            lower=0.0,
        )
        sol = solve(problem)
        np.testing.assert_allclose(sol.x, [[0.3, 0.7]], atol=1e-8)


class TestActiveSetOracle:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_exhaustive_search(self, seed):
        problem = random_instance(seed)
        sol = solve(problem)
        _, best = brute_force_solve(problem)
        assert sol.objective == pytest.approx(best, abs=1e-5)

    def test_oracle_point_is_stationary(self):
        problem = random_instance(7)
        x, _ = brute_force_solve(problem)
        assert kkt_residual(problem, x) < 1e-6


class TestKKTResidual:
    def test_small_at_optimum(self):
        problem = QuadraticProblem(
            design=np.eye(1), targets=np.array([[1.0]]), upper=0.5
        )
        assert kkt_residual(problem, solve(problem).x) < 1e-10

    def test_large_off_optimum(self):
        problem = QuadraticProblem(
            design=np.eye(1),
            targets=np.array([[0.3, 0.7]]),
            equality=np.ones(1),
            lower=0.0,
        )
        perturbed = np.array([[0.3 + 1e-3, 0.7 - 1e-3]])
        assert kkt_residual(problem, perturbed) > 1e-4


class TestSolutionQuality:
    def test_beats_random_feasible_points(self):
        problem = random_instance(11)
        sol = solve(problem)
        rng = np.random.default_rng(99)
        draws = rng.uniform(size=(1000, 3, 1))
        candidates = np.concatenate([draws, 1.0 - draws], axis=2)
        objectives = [problem.objective(c) for c in candidates]
        assert sol.objective <= min(objectives) + 1e-9

    def test_constraints_satisfied(self):
        problem = random_instance(13)
        sol = solve(problem)
        assert np.all(sol.x >= -1e-8) and np.all(sol.x <= 1 + 1e-8)
        np.testing.assert_allclose(sol.x.sum(axis=1), 1.0, atol=1e-8)

    def test_scaling_covariance(self):
        base = random_instance(17, gamma=0.4)
        c = 3.7
        scaled = QuadraticProblem(
            design=c * base.design,
            targets=c * base.targets,
            tikhonov_weight=c * 0.4,
            equality=np.ones(3),
            lower=0.0,
            upper=1.0,
        )
        np.testing.assert_allclose(solve(base).x, solve(scaled).x, atol=1e-8)

    def test_bit_identical_reruns(self):
        problem = random_instance(23)
        a, b = solve(problem), solve(problem)
        assert a.x.tobytes() == b.x.tobytes()
        assert a.objective == b.objective and a.iterations == b.iterations

    def test_max_iter_returns_best_iterate(self):
        problem = random_instance(29)
        sol = solve(problem, max_iter=3)
        assert np.all(np.isfinite(sol.x))
        assert sol.kkt_residual >= 0.0

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_never_worse_than_uniform_split(self, seed):
        problem = random_instance(seed)
        sol = solve(problem)
        assert sol.objective <= problem.objective(np.full((3, 2), 0.5)) + 1e-9


class TestInfeasibility:
    def test_empty_box(self):
        with pytest.raises(InfeasibleProblemError) as exc:
            QuadraticProblem(
                design=np.eye(2),
                targets=np.zeros((2, 1)),
                lower=np.array([[0.0], [0.8]]),
                upper=np.array([[1.0], [0.2]]),
            )
        assert exc.value.certificate["coordinate"] == (1, 0)

    def test_equality_outside_box_sums(self):
        with pytest.raises(InfeasibleProblemError) as exc:
            QuadraticProblem(
                design=np.eye(2),
                targets=np.zeros((2, 2)),
                equality=np.ones(2),
                lower=0.6,
                upper=1.0,
            )
        assert exc.value.certificate["sum_lower"] == pytest.approx(1.2)

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            QuadraticProblem(design=np.eye(2), targets=np.zeros((3, 1)))
        with pytest.raises(ValueError):
            QuadraticProblem(design=np.eye(2), targets=np.zeros((2, 1)), tikhonov_weight=-1.0)
        with pytest.raises(ValueError):
            solve(random_instance(1), tol=-1.0)
