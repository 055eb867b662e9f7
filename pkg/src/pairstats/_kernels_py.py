"""Vectorized numpy implementation of the window-sampling kernel.

Produces bit-identical output to the compiled ``_kernels`` extension: both
draw uniforms from the same counter-based hash of (key, window, draw index).
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STREAM = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_UNIT = 1.0 / 9007199254740992.0  # 2**-53

# bit code a | b << 1 | h << 2 -> outcome index
_CODE_TO_INDEX = np.array([0, 1, 2, 4, 3, 5, 6, 7], dtype=np.uint8)

# per-pair cell -> (h, a, b) hit flags; cells: HA, HB, H, A, B, none
_CELL_H = np.array([1, 1, 1, 0, 0, 0], dtype=bool)
_CELL_A = np.array([1, 0, 0, 1, 0, 0], dtype=bool)
_CELL_B = np.array([0, 1, 0, 0, 1, 0], dtype=bool)

BACKEND = "python"


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _uniform(state, j):
    offset = np.uint64(((j + 1) * int(STREAM)) & 0xFFFFFFFFFFFFFFFF)
    x = _mix(state + offset)
    return (x >> _S11).astype(np.float64) * _UNIT


def simulate_outcomes(key, start, out, cum_pmf, cum_cells, d_h, d_a, d_b):
    """Fill ``out`` with outcome indices of windows ``start .. start+len(out)-1``."""
    n = out.shape[0]
    w = np.arange(start, start + n, dtype=np.uint64)
    state = _mix(np.uint64(key) + (w + np.uint64(1)) * GOLDEN)

    npairs = np.searchsorted(cum_pmf, _uniform(state, 0), side="right")
    h = _uniform(state, 1) < d_h
    a = _uniform(state, 2) < d_a
    b = _uniform(state, 3) < d_b
    k_max = int(npairs.max()) if n else 0
    for k in range(k_max):
        sel = np.nonzero(npairs > k)[0]
        cell = np.searchsorted(cum_cells, _uniform(state[sel], 4 + k), side="right")
        h[sel] |= _CELL_H[cell]
        a[sel] |= _CELL_A[cell]
        b[sel] |= _CELL_B[cell]
    code = a.astype(np.uint8) | (b.astype(np.uint8) << 1) | (h.astype(np.uint8) << 2)
    out[:] = _CODE_TO_INDEX[code]
