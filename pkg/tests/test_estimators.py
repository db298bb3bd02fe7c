"""Estimator wrappers: sklearn protocol, fitted attributes, predictions."""

import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qdtkit import (
    DetectorSpec,
    FullJointTomography,
    PFunctionTomography,
    ProbeGrid,
    RecursiveTomography,
    build_povm,
    exact_frequencies,
    fidelity,
)
from qdtkit.baseline import LatticeData, PhaseSpaceGrid, coherent_expectations
from qdtkit.probes import born_probability_grid


@pytest.fixture(scope="module")
def small_truth():
    return build_povm(DetectorSpec(0.5, 0.6, math.sqrt(5.0), 8))


@pytest.fixture(scope="module")
def small_data(small_truth):
    grid = ProbeGrid.from_intensity_range(2.0, 0.25, 16)
    return exact_frequencies(small_truth, grid)


@pytest.fixture(scope="module")
def small_lattice_data(small_truth):
    grid = PhaseSpaceGrid(half_width=6.0, step=0.1)
    probs = coherent_expectations(small_truth.outcomes[0], grid)
    return LatticeData(grid, probs, trials=0)


class TestSklearnProtocol:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: RecursiveTomography(dim=8, gamma=0.5, l_max=3),
            lambda: FullJointTomography(dim=8, gamma=0.2),
            lambda: PFunctionTomography(block_size=4, cutoff=2.5),
        ],
    )
    def test_get_set_clone(self, factory):
        est = factory()
        params = est.get_params()
        twin = clone(est)
        assert twin.get_params() == params
        if "gamma" in params:
            est.set_params(gamma=0.75)
            assert est.get_params()["gamma"] == 0.75

    def test_defaults(self):
        assert RecursiveTomography().l_max is None
        assert RecursiveTomography().dim == 60
        assert PFunctionTomography().cutoff == pytest.approx(2.8)

    @pytest.mark.parametrize(
        "est",
        [RecursiveTomography(dim=8), FullJointTomography(dim=8), PFunctionTomography()],
    )
    def test_not_fitted_guard(self, est):
        with pytest.raises(NotFittedError):
            est.predict_proba(np.array([0.5 + 0.0j]))


class TestRecursiveTomography:
    def test_fit_attributes(self, small_truth, small_data):
        est = RecursiveTomography(dim=8, gamma=0.0, l_max=6).fit(small_data)
        assert est.dim_ == 8
        assert est.report_["l_max"] == 6
        assert fidelity(est.povm_.outcomes[0], small_truth.outcomes[0]) >= 0.99
        est.povm_.validate()

    def test_auto_depth_by_default(self, small_data):
        est = RecursiveTomography(dim=8, gamma=0.1).fit(small_data)
        assert est.report_["depth_estimated"]

    def test_predictions_match_fitted_povm(self, small_data):
        est = RecursiveTomography(dim=8, gamma=0.1, l_max=3).fit(small_data)
        pred = est.predict_proba(small_data.grid.alphas().ravel())
        expect = born_probability_grid(est.povm_, small_data.grid).reshape(-1, 2)
        np.testing.assert_allclose(pred, expect, atol=1e-9)

    def test_score_is_negative_rms(self, small_data):
        est = RecursiveTomography(dim=8, gamma=0.0, l_max=6).fit(small_data)
        score = est.score(small_data)
        assert -1e-4 < score <= 0.0


class TestFullJointTomography:
    def test_fit_attributes(self, small_truth, small_data):
        est = FullJointTomography(dim=8, gamma=0.0).fit(small_data)
        assert est.dim_ == 8
        assert est.report_["misfit"] < 1e-8
        assert fidelity(est.povm_.outcomes[0], small_truth.outcomes[0]) >= 0.995

    def test_score_close_to_zero_on_exact_data(self, small_data):
        est = FullJointTomography(dim=8, gamma=0.0).fit(small_data)
        assert est.score(small_data) == pytest.approx(0.0, abs=1e-8)


class TestPFunctionTomography:
    def test_fit_attributes(self, small_truth, small_lattice_data):
        est = PFunctionTomography(block_size=4).fit(small_lattice_data)
        assert est.block_.shape == (4, 4)
        assert est.dim_ == 4
        assert est.report_["trials"] == 0
        np.testing.assert_allclose(
            est.block_, est.block_.conj().T, atol=1e-12
        )
        tru = small_truth.outcomes[0].entries[:4, :4]
        rel = np.linalg.norm(est.block_ - tru) / np.linalg.norm(tru)
        assert rel < 0.05

    def test_predict_proba_appends_complement(self, small_lattice_data):
        est = PFunctionTomography(block_size=4).fit(small_lattice_data)
        pred = est.predict_proba(np.array([0.0j, 0.3 + 0.1j]))
        assert pred.shape == (2, 2)
        np.testing.assert_allclose(pred.sum(axis=1), 1.0, atol=1e-12)
