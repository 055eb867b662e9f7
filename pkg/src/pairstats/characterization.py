"""Inversion of measured click probabilities into source parameters.

The closed-form estimators assume at most one pair per window.  They seed an
optional least-squares fit of the exact forward model, which removes the
residual multi-pair bias (of relative order ``mu``).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import (
    InvalidParameterError,
    ModelConsistencyError,
    ModelConsistencyWarning,
    ScanRangeWarning,
    SolverError,
    UndefinedQuantityError,
)
from .model import (
    ChannelTransmissions,
    DarkCountRates,
    DistributionKind,
    PairDistribution,
    SetupModel,
    correlation_strength,
    detection_statistics,
    heralded_g2,
    marginals,
)

logger = logging.getLogger(__name__)

# multi-pair admissibility: warn below, refuse below hard
R_WARN = 40.0
R_HARD = 10.0
# g2 divides by triple-click probabilities that can sit near 1e-12, so the
# dropped pair-number tail must be far below them
PREDICTION_TAIL_TOL = 1e-30

THERMAL_P1_MAX = 0.25
THERMAL_P1_ARGMAX = math.atanh(math.sqrt(0.5))


@dataclass(frozen=True)
class MeasuredProbabilities:
    """Per-window singles and H-coincidence probabilities."""

    p_h: float
    p_a: float
    p_b: float
    p_ah: float
    p_bh: float
    n_windows: int

    def __post_init__(self):
        for name in ("p_h", "p_a", "p_b", "p_ah", "p_bh"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {v!r}")
        if self.p_ah > min(self.p_a, self.p_h) + 1e-15:
            raise InvalidParameterError("p_ah exceeds min(p_a, p_h)")
        if self.p_bh > min(self.p_b, self.p_h) + 1e-15:
            raise InvalidParameterError("p_bh exceeds min(p_b, p_h)")
        if self.n_windows < 1:
            raise InvalidParameterError("n_windows must be at least 1")

    def stderr(self, name: str) -> float:
        """Binomial standard error of one of the probabilities."""
        p = getattr(self, name)
        return math.sqrt(p * (1.0 - p) / self.n_windows)

    @property
    def stderrs(self) -> dict:
        return {k: self.stderr(k) for k in ("p_h", "p_a", "p_b", "p_ah", "p_bh")}

    def swapped(self) -> "MeasuredProbabilities":
        return MeasuredProbabilities(self.p_h, self.p_b, self.p_a, self.p_bh, self.p_ah, self.n_windows)

    @classmethod
    def from_vector(cls, p, n_windows: int) -> "MeasuredProbabilities":
        m = marginals(p)
        return cls(m.p_h, m.p_a, m.p_b, m.p_ah, m.p_bh, n_windows)


@dataclass(frozen=True)
class DirectEstimate:
    """Closed-form single-pair estimates from the A-side and B-side equation sets."""

    eta_h: float
    eta_a: float
    eta_b: float
    eta_h_via_a: float
    eta_h_via_b: float
    p1_via_a: float
    p1_via_b: float
    p1: float
    p1_discrepancy: float
    p1_discrepancy_sigma: float


@dataclass(frozen=True)
class CharacterizedSource:
    eta_h: float
    eta_a: float
    eta_b: float
    p1: float
    mu: float
    r: float
    distribution_kind: DistributionKind
    direct: Optional[DirectEstimate] = None
    refined: bool = False
    fit_chi2: Optional[float] = None
    stderr: dict = field(default_factory=dict)
    warnings: tuple = ()

    @property
    def transmissions(self) -> ChannelTransmissions:
        return ChannelTransmissions(self.eta_h, self.eta_a, self.eta_b)

    @property
    def distribution(self) -> PairDistribution:
        return PairDistribution(self.distribution_kind, self.mu)

    def setup(self, darks: DarkCountRates) -> SetupModel:
        return SetupModel(self.transmissions, darks)


# ---------------------------------------------------------------------------
# closed forms


def dark_count_corrected(p: float, d: float, n_windows: Optional[int] = None) -> float:
    """Probability of a click caused by a photon rather than a dark count.

    Returns ``(p - d) / (1 - d)``.  A value of ``p`` below ``d`` is clamped to
    zero with a warning; one more than five binomial sigmas below ``d`` is
    rejected when ``n_windows`` is given.
    """
    if not 0.0 <= d < 1.0:
        raise InvalidParameterError(f"dark-count probability must lie in [0, 1), got {d!r}")
    if p < d:
        if n_windows is not None:
            sigma = math.sqrt(d * (1.0 - d) / n_windows)
            if p < d - 5.0 * sigma:
                raise ModelConsistencyError(
                    f"click probability {p:.6g} lies more than 5 sigma below the "
                    f"dark-count probability {d:.6g}"
                )
        warnings.warn(
            f"click probability {p:.6g} below dark-count probability {d:.6g}; clamped to 0",
            ModelConsistencyWarning,
            stacklevel=2,
        )
        return 0.0
    return (p - d) / (1.0 - d)


def _single_pair_set(p_x, p_h, p_xh, d_x, d_h, n_windows):
    """Return (eta_h, eta_x, p1) from one arm's singles and coincidences."""
    px1 = dark_count_corrected(p_x, d_x, n_windows)
    ph1 = dark_count_corrected(p_h, d_h, n_windows)
    if px1 == 0.0 or ph1 == 0.0:
        raise UndefinedQuantityError("dark-count-corrected singles vanish; transmissions undefined")
    numerator = p_xh - ph1 * d_x * (1 - d_h) - px1 * d_h * (1 - d_x) - d_x * d_h
    scale = (1 - d_x) * (1 - d_h)
    eta_h = numerator / (px1 * scale)
    eta_x = numerator / (ph1 * scale)
    if eta_h <= 0.0 or eta_x <= 0.0:
        raise SolverError("coincidences do not exceed the accidental level; transmissions not positive")
    return eta_h, eta_x, ph1 / eta_h


def direct_estimate(m: MeasuredProbabilities, d: DarkCountRates) -> DirectEstimate:
    eh_a, ea, p1_a = _single_pair_set(m.p_a, m.p_h, m.p_ah, d.d_a, d.d_h, m.n_windows)
    eh_b, eb, p1_b = _single_pair_set(m.p_b, m.p_h, m.p_bh, d.d_b, d.d_h, m.n_windows)
    # relative error of each set is dominated by its coincidence count
    w_a, w_b = m.p_ah, m.p_bh
    eta_h = (w_a * eh_a + w_b * eh_b) / (w_a + w_b)
    p1 = (w_a * p1_a + w_b * p1_b) / (w_a + w_b)
    rel_var = 1.0 / (m.n_windows * m.p_ah) + 1.0 / (m.n_windows * m.p_bh)
    sigma = p1 * math.sqrt(rel_var)
    return DirectEstimate(eta_h, ea, eb, eh_a, eh_b, p1_a, p1_b, p1, p1_a - p1_b, sigma)


def _poisson_p1(mu):
    return mu * math.exp(-mu)


def _thermal_p1(mu):
    return (math.tanh(mu) / math.cosh(mu)) ** 2


def brightness_from_p1(kind, p1: float) -> float:
    """Low-brightness root of ``p1(mu) = p1`` for the given distribution."""
    kind = DistributionKind(kind)
    if kind is DistributionKind.POISSON:
        f, mu_hi, p1_max = _poisson_p1, 1.0, math.exp(-1.0)
    else:
        f, mu_hi, p1_max = _thermal_p1, THERMAL_P1_ARGMAX, THERMAL_P1_MAX
    if not 0.0 <= p1 <= p1_max:
        raise SolverError(
            f"p1={p1!r} outside the attainable range [0, {p1_max:.6g}] of a {kind.value} source"
        )
    if p1 == 0.0:
        return 0.0
    if f(mu_hi) <= p1:
        return mu_hi
    return optimize.brentq(lambda mu: f(mu) - p1, 0.0, mu_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def multipair_ratio(dist: PairDistribution) -> float:
    """Single-pair over multi-pair emission probability; ``inf`` if the latter underflows."""
    if dist.mu <= 0.0:
        raise InvalidParameterError("multi-pair ratio needs mu > 0")
    multi = dist.p_multi
    if multi == 0.0:
        return math.inf
    return dist.p1 / multi


def g2_low_brightness_approx(mu: float, eta_h: float) -> float:
    return mu * (2.0 - eta_h)


# ---------------------------------------------------------------------------
# full inversion


def _fit_full_model(m, d, kind, start, tail_tol):
    names = ("p_h", "p_a", "p_b", "p_ah", "p_bh")
    data = np.array([getattr(m, k) for k in names])
    # binomial weights; the floor keeps zero-count entries finite
    sigma = np.sqrt(np.maximum(data * (1 - data), 1.0 / m.n_windows) / m.n_windows)

    def residuals(x):
        eh, ea, eb, mu = x
        try:
            setup = SetupModel(ChannelTransmissions(eh, ea, eb), d)
        except InvalidParameterError:
            return np.full(5, 1e6)
        mm = marginals(detection_statistics(PairDistribution(kind, mu), setup, tail_tol))
        return (np.array([getattr(mm, k) for k in names]) - data) / sigma

    x0 = np.array(start, dtype=float)
    lower = np.zeros(4)
    upper = np.array([1.0, 1.0, 1.0, np.inf if kind is DistributionKind.POISSON else THERMAL_P1_ARGMAX])
    x0 = np.clip(x0, lower + 1e-300, np.minimum(upper, 1.0) - 1e-12)
    sol = optimize.least_squares(
        residuals, x0, bounds=(lower, upper), x_scale=np.abs(x0),
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400,
    )
    if not sol.success:
        raise SolverError(f"full-model fit failed: {sol.message}")
    return sol.x, float(2 * sol.cost)


def solve_transmissions(
    m: MeasuredProbabilities,
    d: DarkCountRates,
    dist_kind=DistributionKind.POISSON,
    *,
    refine: bool = True,
    on_inconsistency: str = "raise",
    consistency_sigmas: float = 5.0,
    tail_tol: float = 1e-14,
) -> CharacterizedSource:
    """Recover transmissions and brightness from singles and H-coincidences.

    The closed-form single-pair estimates come first and are kept in
    ``result.direct``.  With ``refine`` they seed a weighted least-squares
    fit of the exact forward model to the five measured probabilities.

    ``on_inconsistency`` is ``"raise"`` or ``"warn"`` and governs the A-side
    versus B-side single-pair probability check.
    """
    if on_inconsistency not in ("raise", "warn"):
        raise InvalidParameterError("on_inconsistency must be 'raise' or 'warn'")
    kind = DistributionKind(dist_kind)
    notes = []

    direct = direct_estimate(m, d)
    if abs(direct.p1_discrepancy) > consistency_sigmas * direct.p1_discrepancy_sigma:
        msg = (
            f"single-pair probability from the A arm ({direct.p1_via_a:.6g}) and the B arm "
            f"({direct.p1_via_b:.6g}) differ by more than {consistency_sigmas:g} sigma"
        )
        if on_inconsistency == "raise":
            raise ModelConsistencyError(msg)
        notes.append(msg)

    if direct.eta_a + direct.eta_b > 1.0 or direct.eta_h > 1.0:
        raise SolverError(f"closed-form transmissions are unphysical: {direct}")
    mu0 = brightness_from_p1(kind, direct.p1)

    eh, ea, eb, mu = direct.eta_h, direct.eta_a, direct.eta_b, mu0
    chi2 = None
    if refine:
        (eh, ea, eb, mu), chi2 = _fit_full_model(m, d, kind, (eh, ea, eb, mu0), tail_tol)

    dist = PairDistribution(kind, mu)
    r = multipair_ratio(dist)
    if r < R_HARD:
        raise ModelConsistencyError(
            f"multi-pair ratio r={r:.3g} below {R_HARD:g}; single-pair analysis not applicable"
        )
    if r < R_WARN:
        notes.append(f"multi-pair ratio r={r:.3g} below {R_WARN:g}")
    for msg in notes:
        warnings.warn(msg, ModelConsistencyWarning, stacklevel=2)

    return CharacterizedSource(
        eta_h=float(eh), eta_a=float(ea), eta_b=float(eb), p1=dist.p1, mu=float(mu), r=r,
        distribution_kind=kind, direct=direct, refined=refine, fit_chi2=chi2,
        warnings=tuple(notes),
    )


# ---------------------------------------------------------------------------
# forward-model inversions


def g_curve(mu_values, setup: SetupModel, dist_kind=DistributionKind.POISSON, tail_tol=1e-12) -> np.ndarray:
    kind = DistributionKind(dist_kind)
    return np.array([
        correlation_strength(detection_statistics(PairDistribution(kind, float(mu)), setup, tail_tol))
        for mu in mu_values
    ])


def brightness_upper_bound(
    g_measured: float,
    assumed: ChannelTransmissions,
    d: DarkCountRates,
    dist_kind=DistributionKind.POISSON,
    *,
    mu_range=(1e-8, 10.0),
    points: int = 361,
) -> float:
    """Largest brightness whose predicted correlation strength equals ``g_measured``.

    ``assumed`` should hold detector efficiencies only (lossless channels), so
    the predicted curve over-estimates the correlation at every brightness and
    the returned value bounds the true brightness from above.
    """
    kind = DistributionKind(dist_kind)
    if not g_measured > 1.0:
        raise InvalidParameterError("measured correlation strength must exceed 1")
    setup = SetupModel(assumed, d)
    grid = np.logspace(math.log10(mu_range[0]), math.log10(mu_range[1]), points)
    curve = g_curve(grid, setup, kind)
    k_max = int(np.argmax(curve))
    if g_measured > curve[k_max]:
        raise SolverError(
            f"G={g_measured} exceeds the predicted maximum {curve[k_max]:.4g}; "
            "assumed transmissions or dark counts are inconsistent"
        )
    if g_measured < curve[0]:
        warnings.warn(
            f"G={g_measured} is below the curve at the scan floor mu={mu_range[0]:g}; "
            "the low-brightness intersection is not bracketed",
            ScanRangeWarning,
            stacklevel=2,
        )
    if g_measured < curve[-1]:
        raise SolverError(
            f"G={g_measured} is reached only beyond mu={mu_range[1]:g}; widen the scan range"
        )
    above = np.nonzero(curve[k_max:] >= g_measured)[0]
    j = k_max + int(above[-1])
    if curve[j] == g_measured or j == points - 1:
        return float(grid[j])

    def f(mu):
        return g_curve([mu], setup, kind)[0] - g_measured

    return optimize.brentq(f, grid[j], grid[j + 1], xtol=1e-12, rtol=1e-12)


def heralding_probability(setup: SetupModel, dist: PairDistribution, tail_tol=PREDICTION_TAIL_TOL) -> float:
    return marginals(detection_statistics(dist, setup, tail_tol)).p_h


def brightness_from_heralding(
    setup: SetupModel, dist_kind, p_h_target: float, tail_tol: float = PREDICTION_TAIL_TOL,
    mu_ceiling: float = 200.0,
) -> float:
    """Brightness at which the forward model's heralding probability equals ``p_h_target``."""
    kind = DistributionKind(dist_kind)
    d_h = setup.darks.d_h
    if p_h_target == d_h:
        return 0.0
    if not d_h < p_h_target < 1.0:
        raise SolverError(f"heralding probability {p_h_target!r} outside ({d_h}, p_H max)")

    def f(mu):
        return heralding_probability(setup, PairDistribution(kind, mu), tail_tol) - p_h_target

    # first guess from the single-pair law, then expand
    eta_h = setup.transmissions.eta_h
    if eta_h == 0.0:
        raise SolverError("eta_h = 0: heralding probability does not depend on brightness")
    hi = max(2.0 * (p_h_target - d_h) / eta_h, 1e-12)
    if kind is DistributionKind.THERMAL:
        hi = min(hi, 1.0)
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > mu_ceiling:
            raise SolverError(f"heralding probability {p_h_target!r} not reached below mu={mu_ceiling}")
    return optimize.brentq(f, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def predict_g2(setup: SetupModel, dist: PairDistribution, tail_tol: float = PREDICTION_TAIL_TOL) -> float:
    """Heralded autocorrelation ``p_AB|H / (p_A|H p_B|H)`` from the forward model."""
    p = detection_statistics(dist, setup, tail_tol)
    if marginals(p).p_h == 0.0:
        raise UndefinedQuantityError("forward-model heralding probability is zero")
    return heralded_g2(p)


def predict_at_heralding(setup: SetupModel, dist_kind, p_h: float) -> tuple:
    """Return ``(mu, g2)`` at a requested heralding probability."""
    mu = brightness_from_heralding(setup, dist_kind, p_h)
    return mu, predict_g2(setup, PairDistribution(dist_kind, mu))


# ---------------------------------------------------------------------------
# bootstrap


def propagate_uncertainty(
    counts,
    d: DarkCountRates,
    dist_kind=DistributionKind.POISSON,
    n_resamples: int = 200,
    seed: int = 0,
    *,
    refine: bool = True,
    max_failure_fraction: float = 0.10,
) -> CharacterizedSource:
    """Characterize ``counts`` and attach multinomial-bootstrap standard errors.

    Resample ``k`` draws from ``SeedSequence(seed).spawn`` child ``k``, so the
    result does not depend on evaluation order.
    """
    from .montecarlo import estimate_probabilities

    if n_resamples < 2:
        raise InvalidParameterError("need at least two resamples")
    kind = DistributionKind(dist_kind)
    n = int(counts.n_windows)
    freqs = np.asarray(counts.outcome_counts, dtype=float) / n

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ModelConsistencyWarning)
        best = solve_transmissions(
            estimate_probabilities(counts), d, kind, refine=refine, on_inconsistency="warn"
        )
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)

    samples = []
    failures = 0
    children = np.random.SeedSequence(seed).spawn(n_resamples)
    for child in children:
        draw = np.random.default_rng(child).multinomial(n, freqs)
        resampled = replace(counts, outcome_counts=draw)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ModelConsistencyWarning)
                est = solve_transmissions(
                    estimate_probabilities(resampled), d, kind, refine=refine, on_inconsistency="warn"
                )
        except (SolverError, ModelConsistencyError, InvalidParameterError) as exc:
            logger.debug("bootstrap resample failed: %s", exc)
            failures += 1
            continue
        samples.append((est.eta_h, est.eta_a, est.eta_b, est.p1, est.mu, est.r))
    if failures > max_failure_fraction * n_resamples:
        raise SolverError(f"{failures} of {n_resamples} bootstrap resamples failed")
    arr = np.array(samples)
    # centring on one sample keeps identical resamples at exactly zero spread
    std = (arr - arr[0]).std(axis=0, ddof=1)
    names = ("eta_h", "eta_a", "eta_b", "p1", "mu", "r")
    return replace(best, stderr={k: float(s) for k, s in zip(names, std)})
