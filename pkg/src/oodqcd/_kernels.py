"""Compiled inner loops shared by the streaming and batch detector paths.

The streaming step functions and the Monte-Carlo harness call the same
kernels, so a batch run reproduces the step-by-step trajectory exactly.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def cusum_update(w, llr):
    v = w + llr
    return v if v > 0.0 else 0.0


@njit(cache=True)
def cusum_first_crossing(llr, w0, b):
    """Run the reflected recursion from ``w0``; return (index or -1, final W)."""
    w = w0
    for i in range(llr.shape[0]):
        v = w + llr[i]
        w = v if v > 0.0 else 0.0
        if w >= b:
            return i, w
    return -1, w


@njit(cache=True)
def window_zscore(buf):
    """Z-score of the last entry of ``buf`` against the whole buffer (divisor w)."""
    n = buf.shape[0]
    s = 0.0
    for i in range(n):
        s += buf[i]
    mean = s / n
    ss = 0.0
    for i in range(n):
        d = buf[i] - mean
        ss += d * d
    sd = math.sqrt(ss / n)
    if sd == 0.0:
        return np.nan
    return (buf[n - 1] - mean) / sd


@njit(cache=True)
def window_sum(buf):
    s = 0.0
    for i in range(buf.shape[0]):
        s += buf[i]
    return s


@njit(cache=True)
def zscore_first_crossing(values, seen, w, b):
    """``values`` holds up to w-1 carried samples followed by new ones.

    ``seen`` is the stream position of ``values[0]`` (0-based). Returns the
    index into ``values`` of the first alarm, -1 if none, or -2 - index on a
    zero-spread window.
    """
    n = values.shape[0]
    for i in range(n):
        if seen + i + 1 < w:
            continue
        if i + 1 < w:
            continue
        z = window_zscore(values[i + 1 - w : i + 1])
        if z != z:
            return -2 - i
        if abs(z) > b:
            return i
    return -1


@njit(cache=True)
def windowed_sum_first_crossing(terms, seen, w, b):
    """Chi-square style rule: alarm when the windowed sum of ``terms`` exceeds b."""
    n = terms.shape[0]
    for i in range(n):
        if seen + i + 1 < w:
            continue
        if i + 1 < w:
            continue
        if window_sum(terms[i + 1 - w : i + 1]) > b:
            return i
    return -1
