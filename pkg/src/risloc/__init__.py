"""Gridless near-field 3D localization through a reflecting surface.

Synthesis of the reflected uplink, a 2D atomic-norm SDP solved by ADMM,
chirp-based range recovery, grid baselines, and a seeded benchmark harness.
"""

from .anm import AdmmOptions, InfeasibleEpsError, SdpSolution, Toep2Coeffs, solve_anm, toep2, toep2_adjoint
from .baselines import GridSpec, MusicSpectrum, PolarDictionary, build_polar_dictionary, music3d_ris, omp_estimate
from .harness import ExperimentConfig, MetricsRow, run_error_vs_k, run_rmse_vs_snr, run_trial
from .model import (
    BsRisLink,
    GeometryError,
    MeasurementStack,
    PhaseSchedule,
    SpatialFreqs,
    UeGroundTruth,
    UpaGeometry,
    build_bs_channel,
    exact_response,
    fresnel_response,
    spatial_freqs_from_ue,
    synthesize,
    ue_from_spatial_freqs,
)
from .recovery import (
    DegenerateChirpError,
    FreqPairEstimates,
    LocalizationError,
    PairingAmbiguityError,
    RankDeficientError,
    SingularGramError,
    UeEstimate,
    angles_from_freqs,
    estimate_gains,
    estimate_ranges,
    localize,
    mapp,
)
from .subspace import ChirpSubspace, LiftingOperator, build_subspace, gamma_interval_for_ranges

__version__ = "0.1.0"
