"""Quasi-probability kernel and joint least-squares baselines."""

import math

import numpy as np
import pytest

from qdtkit import (
    ConfigError,
    DetectorSpec,
    FockOperator,
    ProbeGrid,
    ReconConfig,
    build_povm,
    exact_frequencies,
    fidelity,
    run_recursion,
    synthesize,
)
from qdtkit.baseline import (
    DEFAULT_CUTOFF,
    FULL_JOINT_MAX_DIM,
    LatticeData,
    PhaseSpaceGrid,
    binomial_fractions,
    coherent_expectations,
    full_joint_solve,
    p_kernel,
    pfunction_block,
    pfunction_element,
)


@pytest.fixture(scope="module")
def coarse_grid():
    return PhaseSpaceGrid(half_width=10.0, step=0.1)


@pytest.fixture(scope="module")
def coarse_desk_probs(desk_truth, coarse_grid):
    return coherent_expectations(desk_truth.outcomes[0], coarse_grid)


class TestPhaseSpaceGrid:
    def test_default_lattice_shape(self):
        grid = PhaseSpaceGrid()
        assert grid.n_axis == 401
        axis = grid.axis()
        assert axis[0] == pytest.approx(-10.0)
        assert axis[-1] == pytest.approx(10.0)
        assert axis[200] == pytest.approx(0.0, abs=1e-12)

    def test_alphas_and_measure(self):
        grid = PhaseSpaceGrid(half_width=1.0, step=1.0)
        alphas = grid.alphas()
        assert alphas.shape == (3, 3)
        assert alphas[0, 0] == pytest.approx((-1 - 1j) / math.sqrt(2))
        assert alphas[2, 1] == pytest.approx(1 / math.sqrt(2))
        assert grid.cell_measure == pytest.approx(0.5)

    def test_round_trip(self):
        grid = PhaseSpaceGrid(half_width=4.0, step=0.25)
        assert PhaseSpaceGrid.from_dict(grid.to_dict()) == grid

    def test_validation(self):
        with pytest.raises(ValueError):
            PhaseSpaceGrid(step=0.0)
        with pytest.raises(ValueError):
            PhaseSpaceGrid(half_width=0.01, step=0.05)


class TestCoherentExpectations:
    def test_vacuum_projector_portrait(self):
        grid = PhaseSpaceGrid(half_width=3.0, step=0.5)
        proj = np.zeros((5, 5))
        proj[0, 0] = 1.0
        vals = coherent_expectations(FockOperator(proj), grid)
        expect = np.exp(-np.abs(grid.alphas()) ** 2)
        np.testing.assert_allclose(vals, expect, atol=1e-12)

    def test_desk_portrait_at_origin(self, desk_lattice_probs):
        assert desk_lattice_probs[200, 200] == pytest.approx(math.exp(-1.5), abs=1e-8)


class TestBinomialFractions:
    def test_degenerate_probabilities(self):
        p = np.array([[0.0, 1.0]])
        f = binomial_fractions(p, 50, seed=3)
        np.testing.assert_array_equal(f, p)

    def test_deterministic_and_quantized(self):
        p = np.full((4, 4), 0.37)
        a = binomial_fractions(p, 20, seed=5)
        b = binomial_fractions(p, 20, seed=5)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(a * 20, np.round(a * 20), atol=1e-12)

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            binomial_fractions(np.zeros((2, 2)), 0, seed=1)


class TestLatticeData:
    def test_shape_must_match_grid(self):
        grid = PhaseSpaceGrid(half_width=1.0, step=1.0)
        with pytest.raises(ValueError):
            LatticeData(grid, np.zeros((2, 2)))

    def test_trials_validated(self):
        grid = PhaseSpaceGrid(half_width=1.0, step=1.0)
        with pytest.raises(ValueError):
            LatticeData(grid, np.zeros((3, 3)), trials=-1)

    def test_fractions_frozen(self):
        grid = PhaseSpaceGrid(half_width=1.0, step=1.0)
        data = LatticeData(grid, np.zeros((3, 3)), trials=0)
        with pytest.raises(ValueError):
            data.fractions[0, 0] = 1.0


class TestPKernel:
    def test_unit_response_to_flat_portrait(self, coarse_grid):
        # <alpha|I|alpha> = 1, so diagonal kernels must integrate to one
        ones = np.ones((coarse_grid.n_axis, coarse_grid.n_axis))
        for j in (0, 2):
            est = pfunction_element(ones, p_kernel(j, j, coarse_grid))
            assert est.real == pytest.approx(1.0, abs=1e-6)
            assert abs(est.imag) < 1e-12

    def test_off_diagonal_kernel_kills_flat_portrait(self, coarse_grid):
        ones = np.ones((coarse_grid.n_axis, coarse_grid.n_axis))
        assert abs(pfunction_element(ones, p_kernel(0, 1, coarse_grid))) < 1e-12

    def test_mirror_symmetry(self, coarse_grid):
        k01 = p_kernel(0, 1, coarse_grid)
        k10 = p_kernel(1, 0, coarse_grid)
        np.testing.assert_allclose(k10.values, np.conj(k01.values), atol=1e-15)

    def test_cutoff_floor(self, coarse_grid):
        with pytest.raises(ConfigError):
            p_kernel(0, 0, coarse_grid, cutoff=0.70)
        with pytest.raises(ConfigError):
            p_kernel(0, 0, coarse_grid, cutoff=1.0 / math.sqrt(2.0))
        assert DEFAULT_CUTOFF > 1.0 / math.sqrt(2.0)

    def test_index_validation(self, coarse_grid):
        with pytest.raises(ValueError):
            p_kernel(-1, 0, coarse_grid)

    def test_data_shape_validated(self, coarse_grid):
        kernel = p_kernel(0, 0, coarse_grid)
        with pytest.raises(ValueError):
            pfunction_element(np.ones((3, 3)), kernel)


class TestPFunctionRecovery:
    def test_clean_block_accuracy(self, desk_truth, desk_lattice_probs, lattice_grid):
        block = pfunction_block(desk_lattice_probs, lattice_grid, 5)
        tru = desk_truth.outcomes[0].entries[:5, :5]
        rel = np.linalg.norm(block - tru) / np.linalg.norm(tru)
        assert rel < 0.05

    def test_shot_noise_breaks_physicality(self, desk_truth, coarse_desk_probs, coarse_grid):
        # element-wise estimation has no positivity repair; realistic
        # counting noise wrecks the block even at 1e5 trials per point
        noisy = binomial_fractions(coarse_desk_probs, 100_000, seed=7)
        block = pfunction_block(noisy, coarse_grid, 5)
        tru = desk_truth.outcomes[0].entries[:5, :5]
        rel = np.linalg.norm(block - tru) / np.linalg.norm(tru)
        min_eig = np.linalg.eigvalsh((block + block.conj().T) / 2).min()
        assert min_eig < -0.05 or rel > 0.5

    def test_noise_grows_with_fock_index(self, desk_truth, coarse_desk_probs, coarse_grid):
        tru = desk_truth.outcomes[0].entries
        kernels = {idx: p_kernel(*idx, coarse_grid) for idx in [(1, 1), (0, 2), (4, 4)]}
        errs = {idx: [] for idx in kernels}
        for rep in range(20):
            noisy = binomial_fractions(coarse_desk_probs, 100_000, seed=1000 + rep)
            for idx, kernel in kernels.items():
                errs[idx].append(abs(pfunction_element(noisy, kernel) - tru[idx]))
        low_order = np.mean(errs[(1, 1)] + errs[(0, 2)])
        assert np.mean(errs[(4, 4)]) > 10 * low_order


@pytest.fixture(scope="module")
def small_truth():
    return build_povm(DetectorSpec(0.5, 0.6, math.sqrt(5.0), 8))


@pytest.fixture(scope="module")
def small_grid():
    return ProbeGrid.from_intensity_range(2.0, 0.25, 16)


class TestFullJointSolve:
    def test_phase_blind_detector_recovered_exactly(self):
        truth = build_povm(DetectorSpec(0.5, 0.6, 0.0, 6))
        grid = ProbeGrid.from_intensity_range(2.5, 0.5, 12)
        povm, _ = full_joint_solve(exact_frequencies(truth, grid), 6, 0.0)
        est = povm.outcomes[0].entries
        off = est - np.diag(np.diagonal(est))
        assert np.abs(off).max() < 1e-6
        diag_rel = np.abs(
            np.diagonal(est).real - np.diagonal(truth.outcomes[0].entries).real
        ) / np.diagonal(truth.outcomes[0].entries).real
        assert diag_rel.max() < 1e-3

    def test_noise_free_recovery(self, small_truth, small_grid):
        data = exact_frequencies(small_truth, small_grid)
        povm, report = full_joint_solve(data, 8, 0.0)
        assert fidelity(povm.outcomes[0], small_truth.outcomes[0]) >= 0.995
        assert report["misfit"] < 1e-8

    def test_agrees_with_recursion(self, small_truth, small_grid):
        data = exact_frequencies(small_truth, small_grid)
        joint, _ = full_joint_solve(data, 8, 0.0)
        recursive, _ = run_recursion(data, ReconConfig(dim=8, gamma=0.0, l_max=6))
        assert fidelity(joint.outcomes[0], recursive.outcomes[0]) >= 0.99

    def test_noisy_solution_is_physical(self, small_truth, small_grid):
        data = synthesize(small_truth, small_grid, 1000, seed=99)
        povm, report = full_joint_solve(data, 8, 0.1)
        povm.validate()
        assert report["projection_distance"] >= 0.0
        assert report["misfit"] > 0.0
        assert report["seconds"] > 0.0

    def test_dimension_cap(self, small_truth, small_grid):
        data = exact_frequencies(small_truth, small_grid)
        with pytest.raises(ConfigError):
            full_joint_solve(data, FULL_JOINT_MAX_DIM + 1, 0.0)

    def test_gamma_validated(self, small_truth, small_grid):
        data = exact_frequencies(small_truth, small_grid)
        with pytest.raises(ConfigError):
            full_joint_solve(data, 8, -0.5)
