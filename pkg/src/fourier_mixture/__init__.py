"""Learning the centers of a mixture of spherical Gaussians by Fourier deconvolution.

Samples from ``sum_i w_i N(mu_i, I)`` are split into well separated
proximity components, projected to a few random coordinates, and
deconvolved in Fourier space into a sharply peaked function whose spikes
sit at the projected centers. Spikes found in a base subspace and in each
augmented subspace are patched into full coordinates and then polished
by EM with the weights held fixed.

Typical use::

    from fourier_mixture import LearnConfig, MixtureParams, learn_mixture, sample_mixture

    params = MixtureParams(d=2, centers=[[0, 0], [4, 0]], weights=[0.5, 0.5])
    samples = sample_mixture(params, 10000, seed=1)
    result = learn_mixture(samples.unlabeled(), LearnConfig(weights=(0.5, 0.5)))
"""
from .deconv import (
    DeconvKernel,
    ExactOracle,
    FrequencyDraw,
    MonteCarloOracle,
    draw_frequencies,
    ecf,
    exact_smoothed,
    kernel_fidelity_bound,
    make_kernel,
    oracle_eval,
    oracle_values,
    s_hat,
    theory_budgets,
)
from .errors import (
    ConfigError,
    ConsensusError,
    DomainError,
    FindSpikesError,
    InsufficientDataError,
    LatticeTooLargeError,
    MixtureError,
    ParameterError,
    PatchAmbiguityError,
    PipelineError,
    RetriesExhaustedError,
    StarvedComponentError,
)
from .harness import ExperimentConfig, Report, budget_table, emit_report, read_report, run_experiment
from .model import (
    ConstantsConfig,
    MixtureParams,
    SampleSet,
    SeparationSpec,
    hausdorff,
    min_separation,
    sample_mixture,
)
from .pipeline import LearnConfig, LearnResult, boost, learn_mixture, mixture_nll, refine
from .preprocess import (
    ProximityDecomposition,
    coverage_sample_size,
    pca_reduce,
    proximity_threshold,
    split_clusters,
)
from .projection import ProjectionFrame, patch_centers, project, random_frame
from .spikes import (
    LatticeSpec,
    SpikeCandidate,
    SpikeConfig,
    dedup,
    enumerate_lattice,
    find_spikes,
    maximize_in_ball,
    pattern_search_in_ball,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
