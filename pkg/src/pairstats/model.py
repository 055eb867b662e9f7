"""Exact forward model of the click statistics of a photon-pair source.

Three threshold detectors are watched for one measurement window: ``H`` on the
heralding arm, ``A`` and ``B`` behind a 50/50 splitter on the other arm.  The
joint outcome is an 8-vector of probabilities in the fixed order::

    0: none   1: A    2: B    3: H    4: AB   5: AH   6: BH   7: ABH

Each emitted pair acts on that vector through an 8x8 column-stochastic
matrix; dark counts act once through a second matrix.  The final vector is the
pair-number-weighted sum of matrix powers applied to the all-dark state.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .errors import InvalidParameterError, TruncationError, UndefinedQuantityError

N_OUTCOMES = 8
_ALGEBRAIC_TOL = 1e-12

# (a, b, h) click flags for each outcome index
_OUTCOME_FLAGS = (
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
)
_FLAGS_TO_INDEX = {flags: i for i, flags in enumerate(_OUTCOME_FLAGS)}

# index lookup by bit code a | b << 1 | h << 2
CODE_TO_INDEX = np.array(
    [_FLAGS_TO_INDEX[(bool(c & 1), bool(c & 2), bool(c & 4))] for c in range(8)],
    dtype=np.uint8,
)

OUTCOME_LABELS = ("none", "A", "B", "H", "AB", "AH", "BH", "ABH")


@dataclass(frozen=True)
class DetectorOutcome:
    """Which of the three detectors clicked in one window."""

    a_clicked: bool
    b_clicked: bool
    h_clicked: bool

    @property
    def index(self) -> int:
        return _FLAGS_TO_INDEX[(bool(self.a_clicked), bool(self.b_clicked), bool(self.h_clicked))]

    @classmethod
    def from_index(cls, index: int) -> "DetectorOutcome":
        if not 0 <= index < N_OUTCOMES:
            raise InvalidParameterError(f"outcome index must be in 0..7, got {index}")
        return cls(*_OUTCOME_FLAGS[index])

    @property
    def label(self) -> str:
        return OUTCOME_LABELS[self.index]


def _mask(detector: str) -> np.ndarray:
    pos = "abh".index(detector)
    return np.array([flags[pos] for flags in _OUTCOME_FLAGS])


MASK_A = _mask("a")
MASK_B = _mask("b")
MASK_H = _mask("h")


def _check_probability(name, value, *, upper_open=False):
    if not (0.0 <= value <= 1.0) or (upper_open and value >= 1.0):
        bound = "[0, 1)" if upper_open else "[0, 1]"
        raise InvalidParameterError(f"{name} must lie in {bound}, got {value!r}")


@dataclass(frozen=True)
class ChannelTransmissions:
    """Overall source-to-click probabilities of the three channels.

    ``eta_a`` and ``eta_b`` share one photon through the splitter, so their sum
    cannot exceed one.
    """

    eta_h: float
    eta_a: float
    eta_b: float

    def __post_init__(self):
        for name in ("eta_h", "eta_a", "eta_b"):
            _check_probability(name, getattr(self, name))
        if self.eta_a + self.eta_b > 1.0 + 1e-15:
            raise InvalidParameterError(
                f"eta_a + eta_b = {self.eta_a + self.eta_b!r} exceeds 1 "
                "(a photon reaches at most one splitter output)"
            )

    def scaled(self, factor: float) -> "ChannelTransmissions":
        return ChannelTransmissions(self.eta_h * factor, self.eta_a * factor, self.eta_b * factor)

    def swapped(self) -> "ChannelTransmissions":
        return ChannelTransmissions(self.eta_h, self.eta_b, self.eta_a)


@dataclass(frozen=True)
class DarkCountRates:
    """Dark-count probability per measurement window for each detector."""

    d_h: float = 0.0
    d_a: float = 0.0
    d_b: float = 0.0

    def __post_init__(self):
        for name in ("d_h", "d_a", "d_b"):
            _check_probability(name, getattr(self, name), upper_open=True)

    def swapped(self) -> "DarkCountRates":
        return DarkCountRates(self.d_h, self.d_b, self.d_a)


@dataclass(frozen=True)
class SetupModel:
    transmissions: ChannelTransmissions
    darks: DarkCountRates = field(default_factory=DarkCountRates)
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c <= 1.0:
            raise InvalidParameterError(f"correlation factor c must lie in (0, 1], got {self.c!r}")
        # raises on negative cells
        pair_cell_probabilities(self.transmissions, self.c)

    @classmethod
    def from_values(cls, eta_h, eta_a, eta_b, d_h=0.0, d_a=0.0, d_b=0.0, c=1.0) -> "SetupModel":
        return cls(ChannelTransmissions(eta_h, eta_a, eta_b), DarkCountRates(d_h, d_a, d_b), c)


class DistributionKind(str, enum.Enum):
    POISSON = "poisson"
    THERMAL = "thermal"


@dataclass(frozen=True)
class PairDistribution:
    """Pair-number distribution per window.

    Poisson: ``p_i = exp(-mu) mu**i / i!``.
    Thermal: ``p_i = tanh(mu)**(2i) / cosh(mu)**2``, a geometric law with ratio
    ``tanh(mu)**2`` and mean pair number ``sinh(mu)**2``.
    """

    kind: DistributionKind
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "kind", DistributionKind(self.kind))
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise InvalidParameterError(f"mu must be a finite nonnegative number, got {self.mu!r}")

    @property
    def mean_pairs(self) -> float:
        if self.kind is DistributionKind.POISSON:
            return self.mu
        return math.sinh(self.mu) ** 2

    @property
    def _ratio(self) -> float:
        return math.tanh(self.mu) ** 2

    def pmf(self, i) -> np.ndarray:
        i = np.asarray(i)
        if self.kind is DistributionKind.POISSON:
            if self.mu == 0.0:
                return np.where(i == 0, 1.0, 0.0)
            return np.exp(-self.mu + i * math.log(self.mu) - special.gammaln(i + 1.0))
        lam = self._ratio
        return (1.0 / math.cosh(self.mu) ** 2) * lam ** i

    def tail(self, i) -> np.ndarray:
        """Probability of more than ``i`` pairs."""
        i = np.asarray(i)
        if self.kind is DistributionKind.POISSON:
            return special.pdtrc(i, self.mu)
        return self._ratio ** (i + 1)

    @property
    def p0(self) -> float:
        return float(self.pmf(0))

    @property
    def p1(self) -> float:
        return float(self.pmf(1))

    @property
    def p_multi(self) -> float:
        """Probability of two or more pairs, computed without cancellation."""
        if self.kind is DistributionKind.POISSON:
            return float(special.gammainc(2.0, self.mu)) if self.mu > 0 else 0.0
        return self._ratio ** 2

    def truncation_index(self, tail_tol: float, max_pairs: int = 100_000) -> int:
        """Smallest ``i`` whose cumulative mass reaches ``1 - tail_tol``."""
        if tail_tol <= 0:
            raise InvalidParameterError("tail_tol must be positive")
        if self.mu == 0.0:
            return 0
        if self.kind is DistributionKind.THERMAL:
            lam = self._ratio
            if lam >= 1.0:
                raise TruncationError(f"thermal ratio tanh(mu)^2 rounds to 1 at mu={self.mu}")
            i = max(0, math.ceil(math.log(tail_tol) / math.log(lam)) - 1)
            while i > 0 and lam ** i <= tail_tol:
                i -= 1
            while lam ** (i + 1) > tail_tol:
                i += 1
        else:
            upper = int(self.mu + 12.0 * math.sqrt(self.mu) + 40)
            while True:
                tails = special.pdtrc(np.arange(upper + 1), self.mu)
                hits = np.nonzero(tails <= tail_tol)[0]
                if hits.size:
                    i = int(hits[0])
                    break
                if upper > max_pairs:
                    i = upper
                    break
                upper *= 2
        if i > max_pairs:
            raise TruncationError(
                f"truncation needs {i} pair terms (> max_pairs={max_pairs}) "
                f"for {self.kind.value} mu={self.mu} at tail_tol={tail_tol}"
            )
        return i


@dataclass(frozen=True)
class ProbabilityVector:
    """Joint click probabilities in the canonical outcome order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape != (N_OUTCOMES,):
            raise InvalidParameterError(f"expected {N_OUTCOMES} entries, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def initial(cls) -> "ProbabilityVector":
        v = np.zeros(N_OUTCOMES)
        v[0] = 1.0
        return cls(v)

    def __getitem__(self, key):
        if isinstance(key, str):
            key = OUTCOME_LABELS.index(key)
        return float(self.values[key])

    def is_valid(self, tol: float = _ALGEBRAIC_TOL) -> bool:
        v = self.values
        return bool(np.all(v >= -tol) and np.all(v <= 1 + tol) and abs(v.sum() - 1.0) <= tol)


def _as_vector(p) -> np.ndarray:
    return p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# transition matrices


def detection_matrix(t: ChannelTransmissions) -> np.ndarray:
    """Single-pair transition matrix, ``M[row, col] = Pr(col -> row)``."""
    eh, ea, eb = t.eta_h, t.eta_a, t.eta_b
    if ea + eb > 1.0 + 1e-15:
        raise InvalidParameterError("eta_a + eta_b exceeds 1")
    M = np.zeros((8, 8))
    M[0, 0] = 1 - eh + (ea + eb) * (eh - 1)
    M[1, 0] = ea * (1 - eh)
    M[2, 0] = eb * (1 - eh)
    M[3, 0] = eh * (1 - (ea + eb))
    M[5, 0] = ea * eh
    M[6, 0] = eb * eh

    M[1, 1] = (1 - eb) * (1 - eh)
    M[4, 1] = eb * (1 - eh)
    M[5, 1] = eh * (1 - eb)
    M[7, 1] = eb * eh

    M[2, 2] = (1 - ea) * (1 - eh)
    M[4, 2] = ea * (1 - eh)
    M[6, 2] = eh * (1 - ea)
    M[7, 2] = ea * eh

    M[3, 3] = 1 - (ea + eb)
    M[5, 3] = ea
    M[6, 3] = eb

    M[4, 4] = 1 - eh
    M[7, 4] = eh

    M[5, 5] = 1 - eb
    M[7, 5] = eb

    M[6, 6] = 1 - ea
    M[7, 6] = ea

    M[7, 7] = 1.0
    return M


def correlated_detection_matrix(t: ChannelTransmissions, c: float) -> np.ndarray:
    """Single-pair matrix when coincidences are suppressed by a factor ``c``.

    Singles keep their probabilities ``eta``; every joint H-and-(A or B)
    survival is multiplied by ``c``.
    """
    if not 0.0 < c <= 1.0:
        raise InvalidParameterError(f"c must lie in (0, 1], got {c!r}")
    if c == 1.0:
        return detection_matrix(t)
    eh, ea, eb = t.eta_h, t.eta_a, t.eta_b
    M = np.zeros((8, 8))
    M[0, 0] = 1 - eh + (ea + eb) * (c * eh - 1)
    M[1, 0] = ea * (1 - c * eh)
    M[2, 0] = eb * (1 - c * eh)
    M[3, 0] = eh * (1 - c * (ea + eb))
    M[5, 0] = c * ea * eh
    M[6, 0] = c * eb * eh

    M[1, 1] = 1 - eb + eh * (c * eb - 1)
    M[4, 1] = eb * (1 - c * eh)
    M[5, 1] = eh * (1 - c * eb)
    M[7, 1] = c * eb * eh

    M[2, 2] = 1 - ea + eh * (c * ea - 1)
    M[4, 2] = ea * (1 - c * eh)
    M[6, 2] = eh * (1 - c * ea)
    M[7, 2] = c * ea * eh

    M[3, 3] = 1 - (ea + eb)
    M[5, 3] = ea
    M[6, 3] = eb

    M[4, 4] = 1 - eh
    M[7, 4] = eh

    M[5, 5] = 1 - eb
    M[7, 5] = eb

    M[6, 6] = 1 - ea
    M[7, 6] = ea

    M[7, 7] = 1.0
    if M.min() < -1e-15:
        raise InvalidParameterError(
            f"c={c} with transmissions {t} gives negative transition probabilities"
        )
    return np.clip(M, 0.0, None)


def dark_count_matrix(d: DarkCountRates) -> np.ndarray:
    dh, da, db = d.d_h, d.d_a, d.d_b
    nh, na, nb = 1 - dh, 1 - da, 1 - db
    M = np.zeros((8, 8))
    M[0, 0] = na * nb * nh
    M[1, 0] = da * nb * nh
    M[2, 0] = na * db * nh
    M[3, 0] = na * nb * dh
    M[4, 0] = da * db * nh
    M[5, 0] = da * nb * dh
    M[6, 0] = na * db * dh
    M[7, 0] = da * db * dh

    M[1, 1] = nb * nh
    M[4, 1] = db * nh
    M[5, 1] = nb * dh
    M[7, 1] = db * dh

    M[2, 2] = na * nh
    M[4, 2] = da * nh
    M[6, 2] = na * dh
    M[7, 2] = da * dh

    M[3, 3] = na * nb
    M[5, 3] = da * nb
    M[6, 3] = na * db
    M[7, 3] = da * db

    M[4, 4] = nh
    M[7, 4] = dh

    M[5, 5] = nb
    M[7, 5] = db

    M[6, 6] = na
    M[7, 6] = da

    M[7, 7] = 1.0
    return M


def pair_cell_probabilities(t: ChannelTransmissions, c: float = 1.0) -> np.ndarray:
    """Per-pair probabilities of the six joint fates of one pair.

    Order: (H and A), (H and B), (H only), (A only), (B only), (neither).
    These are exactly the first column of the single-pair matrix, regrouped.
    """
    eh, ea, eb = t.eta_h, t.eta_a, t.eta_b
    cells = np.array([
        c * eh * ea,
        c * eh * eb,
        eh - c * eh * (ea + eb),
        ea - c * eh * ea,
        eb - c * eh * eb,
        1.0 - eh - ea - eb + c * eh * (ea + eb),
    ])
    if cells.min() < -1e-15:
        raise InvalidParameterError(
            f"c={c} with transmissions {t} gives negative joint survival probabilities"
        )
    return np.clip(cells, 0.0, None)


def check_transition_matrix(M: np.ndarray, tol: float = _ALGEBRAIC_TOL) -> None:
    """Raise ``AssertionError`` unless ``M`` is a valid lower-triangular stochastic matrix."""
    M = np.asarray(M)
    assert M.shape == (8, 8)
    assert np.all(M >= -tol) and np.all(M <= 1 + tol), "entries outside [0, 1]"
    assert np.allclose(M.sum(axis=0), 1.0, rtol=0, atol=tol), "columns do not sum to 1"
    assert np.all(np.triu(M, 1) == 0.0), "nonzero entry above the diagonal"
    assert M[7, 7] == 1.0


# ---------------------------------------------------------------------------
# master sum


def detection_statistics(
    dist: PairDistribution,
    setup: SetupModel,
    tail_tol: float = 1e-12,
    max_pairs: int = 100_000,
) -> ProbabilityVector:
    """Joint click probabilities for one window.

    Sums ``p_i * M_dc @ M**i @ P0`` up to the first ``i`` whose cumulative
    pmf mass reaches ``1 - tail_tol`` and renormalizes by the included mass.
    """
    i_max = dist.truncation_index(tail_tol, max_pairs)
    weights = dist.pmf(np.arange(i_max + 1))
    M = correlated_detection_matrix(setup.transmissions, setup.c)

    state = np.zeros(N_OUTCOMES)
    state[0] = 1.0
    acc = weights[0] * state
    for w in weights[1:]:
        state = M @ state
        acc += w * state
    acc /= weights.sum()
    return ProbabilityVector(dark_count_matrix(setup.darks) @ acc)


# ---------------------------------------------------------------------------
# derived quantities


@dataclass(frozen=True)
class MarginalSet:
    """Singles, coincidences and H-conditionals of a probability vector.

    Conditionals are ``None`` when ``p_h`` is zero.
    """

    p_h: float
    p_a: float
    p_b: float
    p_ah: float
    p_bh: float
    p_ab: float
    p_abh: float
    p_a_given_h: Optional[float]
    p_b_given_h: Optional[float]
    p_ab_given_h: Optional[float]


def marginals(p) -> MarginalSet:
    v = _as_vector(p)
    p_h = float(v[MASK_H].sum())
    p_a = float(v[MASK_A].sum())
    p_b = float(v[MASK_B].sum())
    p_ah = float(v[MASK_A & MASK_H].sum())
    p_bh = float(v[MASK_B & MASK_H].sum())
    p_ab = float(v[MASK_A & MASK_B].sum())
    p_abh = float(v[7])
    if p_h > 0:
        cond = (p_ah / p_h, p_bh / p_h, p_abh / p_h)
    else:
        cond = (None, None, None)
    return MarginalSet(p_h, p_a, p_b, p_ah, p_bh, p_ab, p_abh, *cond)


def correlation_strength(p) -> float:
    """``G = p_AH / (p_H p_A)``; one for uncorrelated clicks."""
    m = marginals(p)
    denom = m.p_h * m.p_a
    if denom == 0.0:
        raise UndefinedQuantityError("correlation strength undefined: p_H * p_A = 0")
    return m.p_ah / denom


def heralded_g2(p) -> float:
    """``p_AB|H / (p_A|H p_B|H)`` from a probability vector."""
    m = marginals(p)
    if m.p_h == 0.0:
        raise UndefinedQuantityError("g2 undefined: herald never clicks")
    denom = m.p_a_given_h * m.p_b_given_h
    if denom == 0.0:
        raise UndefinedQuantityError("g2 undefined: p_A|H * p_B|H = 0")
    return m.p_ab_given_h / denom
