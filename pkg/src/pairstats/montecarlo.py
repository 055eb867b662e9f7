"""Brute-force window simulator used as an oracle for the exact model.

Each window draws a pair number, then sends every pair independently into one
of six fates (H and A, H and B, H only, A only, B only, lost) whose
probabilities reproduce the single-pair matrix including the coincidence
factor ``c``.  Dark counts are independent per detector.

Randomness is counter-based: window ``w`` of seed ``s`` always sees the same
uniforms, so batches can be evaluated in any order.  The compiled kernel is
used when available; set ``PAIRSTATS_PURE_PYTHON=1`` to force the numpy one.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .characterization import MeasuredProbabilities
from .errors import InvalidParameterError, SimulationBudgetError, UndefinedQuantityError
from .model import (
    MASK_A,
    MASK_B,
    MASK_H,
    N_OUTCOMES,
    PairDistribution,
    SetupModel,
    pair_cell_probabilities,
)
from . import _kernels_py

if os.environ.get("PAIRSTATS_PURE_PYTHON"):
    _kernel = _kernels_py
else:
    try:
        from . import _kernels as _kernel
    except ImportError:  # extension not built
        _kernel = _kernels_py

BACKEND = _kernel.BACKEND
KERNELS = {"python": _kernels_py}
if _kernel is not _kernels_py:
    KERNELS["cython"] = _kernel

_MASK64 = (1 << 64) - 1
_BATCH = 1 << 20


@dataclass(frozen=True)
class ClickCounts:
    """Outcome histogram over retained windows.

    ``discarded`` and ``multi_tag_windows`` are filled by timetag ingestion.
    """

    n_windows: int
    outcome_counts: np.ndarray
    seed: Optional[int] = None
    discarded: int = 0
    multi_tag_windows: int = 0

    def __post_init__(self):
        counts = np.array(self.outcome_counts, dtype=np.int64).reshape(-1)
        if counts.shape != (N_OUTCOMES,) or counts.min() < 0:
            raise InvalidParameterError("outcome_counts must be 8 nonnegative counts")
        if int(counts.sum()) != self.n_windows:
            raise InvalidParameterError(
                f"outcome counts sum to {counts.sum()}, expected n_windows={self.n_windows}"
            )
        counts.setflags(write=False)
        object.__setattr__(self, "outcome_counts", counts)

    @classmethod
    def from_outcomes(cls, outcomes, seed=None) -> "ClickCounts":
        outcomes = np.asarray(outcomes)
        return cls(int(outcomes.size), np.bincount(outcomes, minlength=N_OUTCOMES), seed)

    @property
    def frequencies(self) -> np.ndarray:
        return self.outcome_counts / self.n_windows


def stream_key(seed: int) -> int:
    """64-bit stream key derived from an integer seed."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _sampling_tables(setup: SetupModel, dist: PairDistribution, max_pairs: Optional[int]):
    if max_pairs is None:
        i_max = dist.truncation_index(1e-16)
    else:
        i_max = int(max_pairs)
    pmf = dist.pmf(np.arange(i_max + 1))
    cum_pmf = np.cumsum(pmf / pmf.sum())
    cum_pmf[-1] = 1.0
    cum_cells = np.cumsum(pair_cell_probabilities(setup.transmissions, setup.c))
    cum_cells[-1] = 1.0
    return np.ascontiguousarray(cum_pmf), np.ascontiguousarray(cum_cells)


def simulate_outcomes(
    setup: SetupModel,
    dist: PairDistribution,
    n_windows: int,
    seed: int,
    *,
    start: int = 0,
    max_pairs: Optional[int] = None,
    backend: Optional[str] = None,
) -> np.ndarray:
    """Outcome index of each window ``start .. start + n_windows - 1``.

    ``max_pairs`` caps the pair number (the pmf is renormalized below the cap).
    """
    if n_windows < 0:
        raise InvalidParameterError("n_windows must be nonnegative")
    kernel = KERNELS[backend] if backend else _kernel
    cum_pmf, cum_cells = _sampling_tables(setup, dist, max_pairs)
    d = setup.darks
    out = np.empty(n_windows, dtype=np.uint8)
    kernel.simulate_outcomes(stream_key(seed), start, out, cum_pmf, cum_cells, d.d_h, d.d_a, d.d_b)
    return out


def simulate_windows(
    setup: SetupModel,
    dist: PairDistribution,
    n_windows: int,
    seed: int,
    *,
    max_pairs: Optional[int] = None,
    batch_size: int = _BATCH,
    backend: Optional[str] = None,
) -> ClickCounts:
    """Histogram of simulated outcomes over ``n_windows`` windows."""
    if n_windows < 1:
        raise InvalidParameterError("n_windows must be at least 1")
    counts = np.zeros(N_OUTCOMES, dtype=np.int64)
    for start in range(0, n_windows, batch_size):
        n = min(batch_size, n_windows - start)
        out = simulate_outcomes(setup, dist, n, seed, start=start, max_pairs=max_pairs, backend=backend)
        counts += np.bincount(out, minlength=N_OUTCOMES)
    return ClickCounts(n_windows, counts, seed)


def estimate_probabilities(counts: ClickCounts) -> MeasuredProbabilities:
    """Singles and H-coincidence frequencies; binomial errors via ``.stderr``."""
    if counts.n_windows < 1:
        raise InvalidParameterError("n_windows must be at least 1")
    f = counts.outcome_counts
    n = counts.n_windows

    def freq(mask):
        return int(f[mask].sum()) / n

    return MeasuredProbabilities(
        p_h=freq(MASK_H),
        p_a=freq(MASK_A),
        p_b=freq(MASK_B),
        p_ah=freq(MASK_A & MASK_H),
        p_bh=freq(MASK_B & MASK_H),
        n_windows=n,
    )


@dataclass(frozen=True)
class G2Estimate:
    value: float
    stderr: float
    n_conditioning: int
    n_windows: int


def g2_from_counts(counts: ClickCounts, heralded: bool = True) -> G2Estimate:
    """``p_AB / (p_A p_B)`` over H-clicked windows (or all windows).

    The standard error propagates the three binomial errors to first order and
    ignores their correlations.
    """
    f = counts.outcome_counts
    keep = MASK_H if heralded else np.ones(N_OUTCOMES, dtype=bool)
    n = int(f[keep].sum())
    if n == 0:
        raise UndefinedQuantityError("no conditioning windows")
    pa = int(f[keep & MASK_A].sum()) / n
    pb = int(f[keep & MASK_B].sum()) / n
    pab = int(f[keep & MASK_A & MASK_B].sum()) / n
    if pa * pb == 0.0:
        raise UndefinedQuantityError("p_A * p_B = 0 among conditioning windows")
    g2 = pab / (pa * pb)
    rel2 = (1 - pa) / (n * pa) + (1 - pb) / (n * pb)
    abs2 = pab * (1 - pab) / n / (pa * pb) ** 2
    return G2Estimate(g2, math.sqrt(abs2 + g2 * g2 * rel2), n, counts.n_windows)


def simulate_heralded_g2(
    setup: SetupModel,
    dist: PairDistribution,
    n_heralds: int,
    seed: int,
    *,
    heralded: bool = True,
    max_pairs: Optional[int] = None,
    max_windows: int = 10**9,
    batch_size: int = _BATCH,
    backend: Optional[str] = None,
) -> G2Estimate:
    """Simulated g2 from the first ``n_heralds`` conditioning windows.

    With ``heralded=False`` every window conditions (unheralded autocorrelation).
    """
    if n_heralds < 1:
        raise InvalidParameterError("n_heralds must be at least 1")
    counts = np.zeros(N_OUTCOMES, dtype=np.int64)
    collected = 0
    start = 0
    while collected < n_heralds:
        if start >= max_windows:
            raise SimulationBudgetError(
                f"collected {collected} of {n_heralds} heralds in {max_windows} windows"
            )
        n = min(batch_size, max_windows - start)
        out = simulate_outcomes(setup, dist, n, seed, start=start, max_pairs=max_pairs, backend=backend)
        if heralded:
            out = out[MASK_H[out]]
        out = out[: n_heralds - collected]
        counts += np.bincount(out, minlength=N_OUTCOMES)
        collected += out.size
        start += n
    est = g2_from_counts(ClickCounts(collected, counts, seed), heralded=heralded)
    return replace(est, n_windows=start)
