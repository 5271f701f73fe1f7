"""Simulate two-qubit polarization-entangled states and analyze them with Bell tests or tomography."""

from .core import DensityMatrix, PureState, ValidationError, fidelity, from_pure, mix
from .states import (
    SectorWeights,
    apply_halfwave_flip,
    bell_phi,
    mems,
    mems_sector_mixture,
    p_from_displacement,
    sector_mixture,
    singlet,
    state_from_config,
    werner,
)
from .measures import (
    StateReport,
    chsh_max,
    concurrence,
    linear_entropy,
    ppt_min_eigenvalue,
    report,
    tangle,
    werner_tangle_of_entropy,
)
from .chsh import OPTIMAL_ANGLES, PRINTED_ANGLES, ChshAngles, chsh_S, correlation, estimate_S_from_counts
from .apparatus import CountRecord, DetectorModel, expected_rate, run_bell_experiment, simulate_counts
from .tomography import (
    LinearInversionTomography,
    MaximumLikelihoodTomography,
    TomographyResult,
    linear_inversion,
    mle_reconstruct,
    standard_settings,
)

__version__ = "0.1.0"
