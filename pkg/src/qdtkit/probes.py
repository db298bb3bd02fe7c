"""Coherent probe lattice, Born-rule probabilities, and shot-noise synthesis.

A probe grid is M_a magnitudes x M_p uniformly spaced phases. Datasets
record per-probe, per-outcome counts with the RNG seed, and serialize as a
one-line JSON header followed by a CSV body.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .fock import CoherentAmplitudes, POVMSet, coherent_amplitudes

__all__ = [
    "ProbeGrid",
    "Dataset",
    "ExactData",
    "born_probability",
    "born_probability_grid",
    "synthesize",
    "exact_frequencies",
    "relative_frequencies",
]

_DATASET_FORMAT = "qdtkit-dataset-v1"


@dataclass(frozen=True)
class ProbeGrid:
    """Coherent probe lattice alpha_{u,v} = |alpha_u| e^{i theta_v}.

    Attributes:
        magnitudes: strictly increasing |alpha_u| values, >= 0.
        phases_per_magnitude: M_p; theta_v = 2 pi v / M_p for v = 0..M_p-1.
    """

    magnitudes: tuple[float, ...]
    phases_per_magnitude: int

    def __post_init__(self):
        mags = tuple(float(m) for m in self.magnitudes)
        if len(mags) < 1:
            raise ValueError("grid needs at least one magnitude")
        if any(m < 0 for m in mags):
            raise ValueError("magnitudes must be nonnegative")
        if any(b <= a for a, b in zip(mags, mags[1:])):
            raise ValueError("magnitudes must be strictly increasing")
        if self.phases_per_magnitude < 1:
            raise ValueError("phases_per_magnitude must be >= 1")
        object.__setattr__(self, "magnitudes", mags)

    @classmethod
    def from_intensity_range(
        cls, max_intensity: float, intensity_step: float, phases_per_magnitude: int
    ) -> "ProbeGrid":
        """Grid over |alpha|^2 = 0, step, 2*step, ..., <= max_intensity."""
        if intensity_step <= 0 or max_intensity < 0:
            raise ValueError("need intensity_step > 0 and max_intensity >= 0")
        n = int(np.floor(max_intensity / intensity_step + 1e-9)) + 1
        intensities = intensity_step * np.arange(n)
        return cls(tuple(np.sqrt(intensities)), phases_per_magnitude)

    @property
    def n_magnitudes(self) -> int:
        return len(self.magnitudes)

    @property
    def n_probes(self) -> int:
        return self.n_magnitudes * self.phases_per_magnitude

    def phases(self) -> npt.NDArray[np.float64]:
        mp = self.phases_per_magnitude
        return 2.0 * np.pi * np.arange(mp) / mp

    def intensities(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.magnitudes) ** 2

    def alphas(self) -> npt.NDArray[np.complex128]:
        """Complex amplitudes, shape (M_a, M_p)."""
        mags = np.asarray(self.magnitudes)
        return mags[:, None] * np.exp(1j * self.phases())[None, :]

    def to_dict(self) -> dict:
        return {
            "magnitudes": list(self.magnitudes),
            "phases_per_magnitude": self.phases_per_magnitude,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ProbeGrid":
        return cls(tuple(obj["magnitudes"]), int(obj["phases_per_magnitude"]))


def born_probability(povm: POVMSet, alpha: CoherentAmplitudes) -> npt.NDArray[np.float64]:
    """Outcome probabilities p_n = <alpha|Pi_n|alpha>, clamped to [0,1]."""
    if alpha.dim != povm.dim:
        raise ValueError(f"dim mismatch: probe {alpha.dim}, POVM {povm.dim}")
    c = alpha.coeffs
    p = np.array([np.real(np.vdot(c, op.entries @ c)) for op in povm.outcomes])
    return np.clip(p, 0.0, 1.0)


def born_probability_grid(povm: POVMSet, grid: ProbeGrid) -> npt.NDArray[np.float64]:
    """Probabilities on the whole lattice, shape (M_a, M_p, N)."""
    d = povm.dim
    phases = grid.phases()
    j = np.arange(d)
    phase_mat = np.exp(1j * np.outer(phases, j))  # (M_p, d)
    out = np.empty((grid.n_magnitudes, grid.phases_per_magnitude, povm.n_outcomes))
    for u, mag in enumerate(grid.magnitudes):
        base = coherent_amplitudes(mag, 0.0, d).coeffs
        c = phase_mat * base[None, :]  # (M_p, d)
        for n, op in enumerate(povm.outcomes):
            out[u, :, n] = np.real(np.einsum("vj,jk,vk->v", c.conj(), op.entries, c))
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Dataset:
    """Finite-statistics measurement record on a probe grid.

    counts has shape (M_a, M_p, N) with sum over outcomes equal to trials
    for every probe.
    """

    grid: ProbeGrid
    trials: int
    counts: npt.NDArray[np.int64] = field(repr=False)
    seed: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        expected = (self.grid.n_magnitudes, self.grid.phases_per_magnitude)
        if counts.ndim != 3 or counts.shape[:2] != expected:
            raise ValueError(f"counts shape {counts.shape} does not match grid {expected}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(counts.sum(axis=2) != self.trials):
            raise ValueError("counts must sum to trials for every probe")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_outcomes(self) -> int:
        return self.counts.shape[2]

    def frequencies(self) -> npt.NDArray[np.float64]:
        return relative_frequencies(self)

    def save(self, path, metadata: dict | None = None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.serialize(metadata))

    def serialize(self, metadata: dict | None = None) -> str:
        header = {
            "format": _DATASET_FORMAT,
            "grid": self.grid.to_dict(),
            "trials": self.trials,
            "seed": self.seed,
            "n_outcomes": self.n_outcomes,
        }
        if metadata:
            header.update(metadata)
        buf = io.StringIO()
        buf.write(json.dumps(header, sort_keys=True))
        buf.write("\n")
        buf.write("u,v,intensity,theta,n,count\n")
        phases = self.grid.phases()
        intensities = self.grid.intensities()
        for u in range(self.grid.n_magnitudes):
            for v in range(self.grid.phases_per_magnitude):
                for n in range(self.n_outcomes):
                    buf.write(
                        f"{u},{v},{intensities[u]:.10g},{phases[v]:.12g},"
                        f"{n},{self.counts[u, v, n]}\n"
                    )
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != _DATASET_FORMAT:
                raise ValueError(f"unrecognized dataset format in {path}")
            grid = ProbeGrid.from_dict(header["grid"])
            n_out = int(header["n_outcomes"])
            counts = np.zeros(
                (grid.n_magnitudes, grid.phases_per_magnitude, n_out), dtype=np.int64
            )
            colnames = fh.readline().strip().split(",")
            if colnames[:2] != ["u", "v"]:
                raise ValueError("dataset CSV header missing")
            for line in fh:
                parts = line.split(",")
                counts[int(parts[0]), int(parts[1]), int(parts[4])] = int(parts[5])
        return cls(grid, int(header["trials"]), counts, int(header["seed"]))


@dataclass(frozen=True)
class ExactData:
    """Noise-free stand-in for a Dataset: exact probabilities on a grid.

    Provides the same (grid, frequencies) interface the reconstruction
    consumes, for oracle tests and noise-free baselines.
    """

    grid: ProbeGrid
    probabilities: npt.NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        expected = (self.grid.n_magnitudes, self.grid.phases_per_magnitude)
        if p.ndim != 3 or p.shape[:2] != expected:
            raise ValueError(f"probability shape {p.shape} does not match grid {expected}")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def n_outcomes(self) -> int:
        return self.probabilities.shape[2]

    def frequencies(self) -> npt.NDArray[np.float64]:
        return self.probabilities


def exact_frequencies(povm: POVMSet, grid: ProbeGrid) -> ExactData:
    """Noise-free data: Born probabilities straight from the POVM."""
    return ExactData(grid, born_probability_grid(povm, grid))


def synthesize(povm: POVMSet, grid: ProbeGrid, trials: int, seed: int) -> Dataset:
    """Sample per-probe outcome counts with shot noise.

    For two outcomes counts are Binomial(trials, p0); multinomial otherwise.
    Each probe draws from its own RNG stream keyed by (seed, u, v), so the
    result is reproducible and independent of evaluation order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    probs = born_probability_grid(povm, grid)
    n_out = probs.shape[2]
    counts = np.zeros(probs.shape, dtype=np.int64)
    for u in range(grid.n_magnitudes):
        for v in range(grid.phases_per_magnitude):
            rng = np.random.default_rng((seed, u, v))
            if n_out == 2:
                k = rng.binomial(trials, probs[u, v, 0])
                counts[u, v, 0] = k
                counts[u, v, 1] = trials - k
            else:
                p = probs[u, v] / probs[u, v].sum()
                counts[u, v] = rng.multinomial(trials, p)
    return Dataset(grid, trials, counts, seed)


def relative_frequencies(ds: Dataset) -> npt.NDArray[np.float64]:
    """Counts normalized per probe."""
    totals = ds.counts.sum(axis=2, keepdims=True)
    if np.any(totals == 0):
        raise ValueError("probe with zero total trials")
    return ds.counts / totals
