"""Quantum detector tomography toolkit for click detectors.

Simulates weak-field homodyne click detectors in a truncated Fock basis,
generates shot-noise-limited coherent-probe datasets, and reconstructs
the detector POVM three ways: a recursive diagonal-by-diagonal
constrained least squares that scales to large truncations, a full joint
least squares for small ones, and a noise-fragile phase-space kernel
baseline. Includes LO phase-jitter analysis, comparison metrics, and a
config-driven command line.
"""

from .baseline import (
    DEFAULT_CUTOFF,
    LatticeData,
    PhaseSpaceGrid,
    PKernel,
    binomial_fractions,
    coherent_expectations,
    full_joint_solve,
    p_kernel,
    pfunction_block,
    pfunction_element,
)
from .config import ExperimentConfig, SweepSpec, load_config, preset
from .detector import (
    DetectorSpec,
    build_no_click_povm,
    build_povm,
    click_povm,
    q_oracle,
)
from .errors import (
    ConfigError,
    InconsistentStateError,
    InfeasibleProblemError,
    ModelInvalidError,
    SeriesTruncationError,
    SolverError,
)
from .estimators import FullJointTomography, PFunctionTomography, RecursiveTomography
from .fock import (
    CoherentAmplitudes,
    FockOperator,
    POVMSet,
    coherent_amplitudes,
    hermitize,
    log_weight,
    project_to_povm,
)
from .jitter import (
    DecayReport,
    JitterSpec,
    apply_jitter,
    decay_bound,
    decay_bound_check,
    phase_diffusion_weights,
)
from .metrics import (
    ComparisonReport,
    compare_elements,
    diagonal_distances,
    fidelity,
    relative_error,
)
from .probes import (
    Dataset,
    ExactData,
    ProbeGrid,
    born_probability,
    born_probability_grid,
    exact_frequencies,
    relative_frequencies,
    synthesize,
)
from .qp import (
    QuadraticProblem,
    Solution,
    first_difference,
    kkt_residual,
    solve,
)
from .recursive import (
    ReconConfig,
    ReconstructionState,
    estimate_l_max,
    reconstruct_diagonal,
    run_recursion,
)
from .tolerances import TOL, Tolerances

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CUTOFF",
    "LatticeData",
    "PhaseSpaceGrid",
    "PKernel",
    "binomial_fractions",
    "coherent_expectations",
    "full_joint_solve",
    "p_kernel",
    "pfunction_block",
    "pfunction_element",
    "ExperimentConfig",
    "SweepSpec",
    "load_config",
    "preset",
    "DetectorSpec",
    "build_no_click_povm",
    "build_povm",
    "click_povm",
    "q_oracle",
    "ConfigError",
    "InconsistentStateError",
    "InfeasibleProblemError",
    "ModelInvalidError",
    "SeriesTruncationError",
    "SolverError",
    "FullJointTomography",
    "PFunctionTomography",
    "RecursiveTomography",
    "CoherentAmplitudes",
    "FockOperator",
    "POVMSet",
    "coherent_amplitudes",
    "hermitize",
    "log_weight",
    "project_to_povm",
    "DecayReport",
    "JitterSpec",
    "apply_jitter",
    "decay_bound",
    "decay_bound_check",
    "phase_diffusion_weights",
    "ComparisonReport",
    "compare_elements",
    "diagonal_distances",
    "fidelity",
    "relative_error",
    "Dataset",
    "ExactData",
    "ProbeGrid",
    "born_probability",
    "born_probability_grid",
    "exact_frequencies",
    "QuadraticProblem",
    "Solution",
    "first_difference",
    "kkt_residual",
    "solve",
    "relative_frequencies",
    "synthesize",
    "ReconConfig",
    "ReconstructionState",
    "estimate_l_max",
    "reconstruct_diagonal",
    "run_recursion",
    "TOL",
    "Tolerances",
    "__version__",
]
