"""Hot numeric kernels with numba-jitted and pure-numpy twins.

The free list is a dense int64 array of shape (units, machines, 2) holding
remaining (cpu, mem) per time unit per machine; every kernel here scans or
mutates slices of it, or builds demand/rate curves over the unit lattice.
Path selection: ``BENE_NUMBA=0`` forces the numpy twins, ``BENE_NUMBA=1``
requires numba, unset prefers numba when importable. Both twins are always
importable (``*_numpy`` / ``*_numba``) for equivalence tests and the
benchmark in benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep, but stay runnable
    njit = None


def _select_backend() -> bool:
    flag = os.environ.get("BENE_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    if flag in ("1", "true", "on", "yes"):
        if njit is None:
            raise RuntimeError("BENE_NUMBA=1 but numba is not importable")
        return True
    return njit is not None


NUMBA_ENABLED = _select_backend()


# --- window_max_counts ------------------------------------------------------
# For each machine, the largest container count that fits in EVERY unit of
# [start, end) given per-container footprint fp = (cpu, mem).

def window_max_counts_numpy(remaining: np.ndarray, start: int, end: int,
                            fp: np.ndarray) -> np.ndarray:
    return (remaining[start:end] // fp).min(axis=(0, 2)).astype(np.int64)


def _window_max_counts_py(remaining, start, end, fp):
    m = remaining.shape[1]
    out = np.empty(m, np.int64)
    for j in range(m):
        best = np.int64(2**62)
        for t in range(start, end):
            for r in range(2):
                c = remaining[t, j, r] // fp[r]
                if c < best:
                    best = c
        out[j] = best
    return out


# --- bounds_ok --------------------------------------------------------------
# True iff 0 <= remaining <= capacity componentwise everywhere (the
# per-(unit, machine) no-double-booking bound).

def bounds_ok_numpy(remaining: np.ndarray, capacity: np.ndarray) -> bool:
    return bool((remaining >= 0).all()) and bool((remaining <= capacity[None, :, :]).all())


def _bounds_ok_py(remaining, capacity):
    for t in range(remaining.shape[0]):
        for j in range(remaining.shape[1]):
            for r in range(2):
                v = remaining[t, j, r]
                if v < 0 or v > capacity[j, r]:
                    return False
    return True


# --- committed_cpu_series ----------------------------------------------------
# Per-unit committed cpu (capacity minus remaining, summed over machines).

def committed_cpu_series_numpy(remaining: np.ndarray, capacity: np.ndarray) -> np.ndarray:
    return (capacity[None, :, 0] - remaining[:, :, 0]).sum(axis=1).astype(np.int64)


def _committed_cpu_series_py(remaining, capacity):
    n = remaining.shape[0]
    out = np.zeros(n, np.int64)
    for t in range(n):
        s = np.int64(0)
        for j in range(remaining.shape[1]):
            s += capacity[j, 0] - remaining[t, j, 0]
        out[t] = s
    return out


# --- accumulate_intervals -----------------------------------------------------
# Interval-add: out[t] += weights[i] for t in [starts[i], ends[i]), clipped to
# [0, n_units). The planner's demand curves are built from this.

def accumulate_intervals_numpy(starts: np.ndarray, ends: np.ndarray,
                               weights: np.ndarray, n_units: int) -> np.ndarray:
    diff = np.zeros(n_units + 1, np.int64)
    lo = np.clip(starts, 0, n_units)
    hi = np.clip(ends, 0, n_units)
    np.add.at(diff, lo, weights)
    np.subtract.at(diff, hi, weights)
    return np.cumsum(diff[:-1]).astype(np.int64)


def _accumulate_intervals_py(starts, ends, weights, n_units):
    out = np.zeros(n_units, np.int64)
    for i in range(starts.shape[0]):
        lo = max(starts[i], 0)
        hi = min(ends[i], n_units)
        for t in range(lo, hi):
            out[t] += weights[i]
    return out


# --- bump_rates ---------------------------------------------------------------
# Arrival-rate curve: base * weekly[day(t)] * (1 + (mult-1) * bell(t)), where
# bell is a Gaussian centered on peak_unit with the given width, evaluated on
# the unit-of-day with wraparound.

def bump_rates_numpy(base: float, mult: float, peak_unit: int, width: float,
                     weekly: np.ndarray, n_units: int) -> np.ndarray:
    t = np.arange(n_units)
    u = t % 96
    d = np.abs(u - peak_unit)
    d = np.minimum(d, 96 - d)
    bell = np.exp(-(d.astype(np.float64) ** 2) / (2.0 * width * width))
    day = (t // 96) % 7
    return base * weekly[day] * (1.0 + (mult - 1.0) * bell)


def _bump_rates_py(base, mult, peak_unit, width, weekly, n_units):
    out = np.empty(n_units, np.float64)
    for t in range(n_units):
        u = t % 96
        d = abs(u - peak_unit)
        if 96 - d < d:
            d = 96 - d
        bell = math.exp(-(d * d) / (2.0 * width * width))
        day = (t // 96) % 7
        out[t] = base * weekly[day] * (1.0 + (mult - 1.0) * bell)
    return out


if njit is not None:
    window_max_counts_numba = njit(cache=True)(_window_max_counts_py)
    bounds_ok_numba = njit(cache=True)(_bounds_ok_py)
    committed_cpu_series_numba = njit(cache=True)(_committed_cpu_series_py)
    accumulate_intervals_numba = njit(cache=True)(_accumulate_intervals_py)
    bump_rates_numba = njit(cache=True)(_bump_rates_py)

if NUMBA_ENABLED:
    window_max_counts = window_max_counts_numba
    bounds_ok = bounds_ok_numba
    committed_cpu_series = committed_cpu_series_numba
    accumulate_intervals = accumulate_intervals_numba
    bump_rates = bump_rates_numba
else:
    window_max_counts = window_max_counts_numpy
    bounds_ok = bounds_ok_numpy
    committed_cpu_series = committed_cpu_series_numpy
    accumulate_intervals = accumulate_intervals_numpy
    bump_rates = bump_rates_numpy
