"""Click statistics of heralded photon-pair sources.

Exact forward model, parameter inversion from singles and coincidences,
brightness bounds, heralded g2 prediction and a Monte Carlo oracle.
"""
__version__ = "0.1.0"

from .characterization import (
    CharacterizedSource,
    MeasuredProbabilities,
    brightness_from_heralding,
    brightness_from_p1,
    brightness_upper_bound,
    dark_count_corrected,
    g2_low_brightness_approx,
    multipair_ratio,
    predict_at_heralding,
    predict_g2,
    propagate_uncertainty,
    solve_transmissions,
)
from .model import (
    ChannelTransmissions,
    DarkCountRates,
    DetectorOutcome,
    DistributionKind,
    MarginalSet,
    PairDistribution,
    ProbabilityVector,
    SetupModel,
    correlated_detection_matrix,
    correlation_strength,
    dark_count_matrix,
    detection_matrix,
    detection_statistics,
    marginals,
)
from .montecarlo import (
    BACKEND,
    ClickCounts,
    estimate_probabilities,
    simulate_heralded_g2,
    simulate_windows,
)
