"""Probe lattice, Born probabilities, and shot-noise synthesis."""

import math

import numpy as np
import pytest

from qdtkit import (
    Dataset,
    FockOperator,
    POVMSet,
    ProbeGrid,
    born_probability,
    born_probability_grid,
    coherent_amplitudes,
    exact_frequencies,
    q_oracle,
    relative_frequencies,
    synthesize,
)


def uniform_povm(dim: int, p: float) -> POVMSet:
    """Two-outcome POVM with constant outcome-0 probability p."""
    return POVMSet(
        (FockOperator(p * np.eye(dim)), FockOperator((1 - p) * np.eye(dim)))
    )


class TestProbeGrid:
    def test_desk_shape(self, desk_grid):
        assert desk_grid.n_magnitudes == 61
        assert desk_grid.phases_per_magnitude == 40
        np.testing.assert_allclose(desk_grid.intensities()[:3], [0.0, 0.5, 1.0])

    def test_phases_uniform(self, desk_grid):
        np.testing.assert_allclose(
            desk_grid.phases(), 2 * np.pi * np.arange(40) / 40, atol=1e-15
        )

    def test_alphas_layout(self):
        grid = ProbeGrid.from_intensity_range(1.0, 0.5, 4)
        alphas = grid.alphas()
        assert alphas.shape == (3, 4)
        assert alphas[2, 1] == pytest.approx(1.0 * np.exp(1j * np.pi / 2))

    def test_rejects_disordered_magnitudes(self):
        with pytest.raises(ValueError):
            ProbeGrid(magnitudes=np.array([1.0, 0.5]), phases_per_magnitude=4)

    def test_round_trip(self, desk_grid):
        back = ProbeGrid.from_dict(desk_grid.to_dict())
        np.testing.assert_array_equal(back.magnitudes, desk_grid.magnitudes)
        assert back.phases_per_magnitude == 40


class TestBornProbability:
    def test_single_outcome_identity(self):
        povm = POVMSet((FockOperator(np.eye(6)),))
        amps = coherent_amplitudes(1.0, 0.3, 6)
        np.testing.assert_allclose(born_probability(povm, amps), [1.0], atol=2e-2)

    def test_vacuum_projector(self):
        proj = np.zeros((6, 6))
        proj[0, 0] = 1.0
        povm = POVMSet((FockOperator(proj), FockOperator(np.eye(6) - proj)))
        amps = coherent_amplitudes(0.0, 0.0, 6)
        np.testing.assert_allclose(born_probability(povm, amps), [1.0, 0.0], atol=1e-12)

    def test_desk_vacuum_probability(self, desk_truth):
        amps = coherent_amplitudes(0.0, 0.0, 60)
        p = born_probability(desk_truth, amps)
        assert p[0] == pytest.approx(math.exp(-1.5), abs=1e-8)

    def test_matches_oracle_across_grid(self, desk_spec, desk_truth, desk_grid):
        probs = born_probability_grid(desk_truth, desk_grid)
        alphas = desk_grid.alphas()
        for u in range(0, desk_grid.n_magnitudes, 6):
            tail = coherent_amplitudes(desk_grid.magnitudes[u], 0.0, 60).tail
            for v in range(0, 40, 7):
                want = q_oracle(desk_spec, alphas[u, v])
                assert abs(probs[u, v, 0] - want) <= 1e-6 + tail

    def test_dimension_mismatch_rejected(self, desk_truth):
        with pytest.raises(ValueError):
            born_probability(desk_truth, coherent_amplitudes(1.0, 0.0, 30))


class TestSynthesize:
    def test_certain_outcome_saturates_counts(self):
        # dim is generous so the coherent tail cannot leak probability
        grid = ProbeGrid.from_intensity_range(2.0, 1.0, 3)
        ds = synthesize(uniform_povm(24, 1.0), grid, 250, seed=1)
        assert np.all(ds.counts[:, :, 0] == 250)
        assert np.all(ds.counts[:, :, 1] == 0)

    def test_binomial_concentration(self):
        grid = ProbeGrid.from_intensity_range(5.0, 0.5, 10)  # 110 probes
        ds = synthesize(uniform_povm(30, 0.5), grid, 100_000, seed=5)
        mean = float(np.mean(ds.counts[:, :, 0] / 100_000))
        assert abs(mean - 0.5) < 5e-4

    def test_deterministic_given_seed(self, flat_truth, flat_grid):
        a = synthesize(flat_truth, flat_grid, 1000, seed=42)
        b = synthesize(flat_truth, flat_grid, 1000, seed=42)
        np.testing.assert_array_equal(a.counts, b.counts)
        c = synthesize(flat_truth, flat_grid, 1000, seed=43)
        assert np.any(a.counts != c.counts)

    def test_single_trial_counts_are_indicator(self, flat_truth, flat_grid):
        ds = synthesize(flat_truth, flat_grid, 1, seed=3)
        assert set(np.unique(ds.counts)) <= {0, 1}
        assert np.all(ds.counts.sum(axis=2) == 1)

    def test_counts_sum_to_trials(self, desk_dataset):
        assert np.all(desk_dataset.counts.sum(axis=2) == 100_000)

    def test_variance_matches_binomial_law(self):
        grid = ProbeGrid.from_intensity_range(0.0, 0.5, 1)
        f = 500
        vals = [
            synthesize(uniform_povm(2, 0.3), grid, f, seed=s).counts[0, 0, 0] / f
            for s in range(500)
        ]
        ratio = float(np.var(vals)) / (0.3 * 0.7 / f)
        assert 1 / 1.2 < ratio < 1.2


class TestRelativeFrequencies:
    def test_certain_counts(self):
        grid = ProbeGrid.from_intensity_range(0.0, 0.5, 1)
        ds = Dataset(grid, 80, np.array([[[80, 0]]], dtype=np.int64), seed=0)
        np.testing.assert_allclose(relative_frequencies(ds), [[[1.0, 0.0]]])

    def test_even_split(self):
        grid = ProbeGrid.from_intensity_range(0.0, 0.5, 1)
        ds = Dataset(grid, 80, np.array([[[40, 40]]], dtype=np.int64), seed=0)
        np.testing.assert_allclose(relative_frequencies(ds), [[[0.5, 0.5]]])

    def test_rounding_bound(self, flat_truth, flat_grid):
        f = 199
        probs = born_probability_grid(flat_truth, flat_grid)
        counts0 = np.round(f * probs[:, :, 0]).astype(np.int64)
        counts = np.stack([counts0, f - counts0], axis=2)
        ds = Dataset(flat_grid, f, counts, seed=0)
        assert np.abs(relative_frequencies(ds) - probs).max() <= 1 / (2 * f) + 1e-12


class TestExactFrequencies:
    def test_frequencies_are_born_probabilities(self, flat_truth, flat_grid):
        data = exact_frequencies(flat_truth, flat_grid)
        np.testing.assert_allclose(
            data.frequencies(), born_probability_grid(flat_truth, flat_grid), atol=1e-12
        )
        assert data.grid is flat_grid


class TestDatasetSerialization:
    def test_round_trip_byte_identical(self, tmp_path, flat_truth, flat_grid):
        ds = synthesize(flat_truth, flat_grid, 321, seed=9)
        path = tmp_path / "probe_data.json"
        ds.save(path)
        first = path.read_bytes()
        back = Dataset.load(path)
        np.testing.assert_array_equal(back.counts, ds.counts)
        assert back.trials == 321 and back.seed == 9
        back.save(path)
        assert path.read_bytes() == first

    def test_header_carries_metadata(self, tmp_path, flat_truth, flat_grid):
        import json

        ds = synthesize(flat_truth, flat_grid, 10, seed=9)
        path = tmp_path / "ds.json"
        ds.save(path, metadata={"config_hash": "abc123"})
        header = json.loads(path.read_text().splitlines()[0])
        assert header["config_hash"] == "abc123"
        assert header["seed"] == 9
