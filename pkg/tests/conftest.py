"""Shared fixtures: ground-truth models and datasets reused across files.

Everything heavy is session-scoped and built lazily, so cheap test files
stay cheap. Seeds are fixed; every fixture is deterministic.
"""

import numpy as np
import pytest

from qdtkit import (
    DetectorSpec,
    PhaseSpaceGrid,
    ProbeGrid,
    build_povm,
    coherent_expectations,
    exact_frequencies,
    synthesize,
)

DESK_SEED = 20260816


@pytest.fixture(scope="session")
def desk_spec():
    return DetectorSpec(
        reflectivity=0.5, eta_apd=0.6, lo_amplitude=np.sqrt(5.0), dim=60
    )


@pytest.fixture(scope="session")
def desk_truth(desk_spec):
    return build_povm(desk_spec)


@pytest.fixture(scope="session")
def desk_grid():
    return ProbeGrid.from_intensity_range(30.0, 0.5, 40)


@pytest.fixture(scope="session")
def desk_exact(desk_truth, desk_grid):
    return exact_frequencies(desk_truth, desk_grid)


@pytest.fixture(scope="session")
def desk_dataset(desk_truth, desk_grid):
    return synthesize(desk_truth, desk_grid, 100_000, seed=DESK_SEED)


@pytest.fixture(scope="session")
def flat_spec():
    """Phase-insensitive detector: no LO, so the POVM is diagonal."""
    return DetectorSpec(reflectivity=0.5, eta_apd=0.6, lo_amplitude=0.0, dim=12)


@pytest.fixture(scope="session")
def flat_truth(flat_spec):
    return build_povm(flat_spec)


@pytest.fixture(scope="session")
def flat_grid():
    return ProbeGrid.from_intensity_range(4.0, 0.5, 8)


@pytest.fixture(scope="session")
def flat_exact(flat_truth, flat_grid):
    return exact_frequencies(flat_truth, flat_grid)


@pytest.fixture(scope="session")
def lattice_grid():
    return PhaseSpaceGrid()


@pytest.fixture(scope="session")
def desk_lattice_probs(desk_truth, lattice_grid):
    """Noise-free no-click probabilities on the default phase-space lattice."""
    return coherent_expectations(desk_truth.outcomes[0], lattice_grid)
