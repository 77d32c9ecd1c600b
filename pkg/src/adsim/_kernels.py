"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The backend is chosen at import time: numba when importable, unless the
environment variable ``ADSIM_NO_NUMBA`` is set to a non-empty value, in which
case the pure-numpy path is used. ``set_backend`` switches at runtime (used by
tests and by benchmarks/bench_kernels.py to compare both paths).

Kernels:
  - pav_fit: pool-adjacent-violators isotonic regression on pre-sorted points
  - first_true_rule: index of the first definitely-true rule per case
  - sample_rows: categorical draw per case from a per-case cumulative row
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False


def _pav_fit_np(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Least-squares monotone (non-decreasing) fit of `values` with `weights`.

    Inputs are ordered by the predictor; returns the fitted value per point.
    Classic stack-based pooling: merge adjacent blocks while a block mean
    exceeds the mean of its successor.
    """
    n = values.shape[0]
    # block arrays: mean, total weight, right edge (exclusive index)
    means = np.empty(n, dtype=np.float64)
    wsum = np.empty(n, dtype=np.float64)
    right = np.empty(n, dtype=np.int64)
    nblocks = 0
    for i in range(n):
        means[nblocks] = values[i]
        wsum[nblocks] = weights[i]
        right[nblocks] = i + 1
        nblocks += 1
        while nblocks > 1 and means[nblocks - 2] >= means[nblocks - 1]:
            w = wsum[nblocks - 2] + wsum[nblocks - 1]
            means[nblocks - 2] = (
                means[nblocks - 2] * wsum[nblocks - 2]
                + means[nblocks - 1] * wsum[nblocks - 1]
            ) / w
            wsum[nblocks - 2] = w
            right[nblocks - 2] = right[nblocks - 1]
            nblocks -= 1
    fitted = np.empty(n, dtype=np.float64)
    start = 0
    for b in range(nblocks):
        fitted[start : right[b]] = means[b]
        start = right[b]
    return fitted


def _first_true_rule_np(tri: np.ndarray) -> np.ndarray:
    """tri: int8 matrix (n_rules, n_cases) in {-1, 0, 1} = {false, unknown, true}.

    Returns int64 per case: index of the first rule that is definitely true,
    or n_rules when no rule fires (the default pathway).
    """
    n_rules = tri.shape[0]
    if n_rules == 0:
        return np.zeros(tri.shape[1], dtype=np.int64)
    hits = tri == 1
    any_hit = hits.any(axis=0)
    first = hits.argmax(axis=0)
    return np.where(any_hit, first, n_rules).astype(np.int64)


def _sample_rows_np(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw one category per case from cumulative distribution `cum[rows[i]]`."""
    per_case = cum[rows]  # (n, k)
    return (u[:, None] < per_case).argmax(axis=1).astype(np.int64)


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _pav_fit_nb(values, weights):  # pragma: no cover - mirrors numpy version
        n = values.shape[0]
        means = np.empty(n, dtype=np.float64)
        wsum = np.empty(n, dtype=np.float64)
        right = np.empty(n, dtype=np.int64)
        nblocks = 0
        for i in range(n):
            means[nblocks] = values[i]
            wsum[nblocks] = weights[i]
            right[nblocks] = i + 1
            nblocks += 1
            while nblocks > 1 and means[nblocks - 2] >= means[nblocks - 1]:
                w = wsum[nblocks - 2] + wsum[nblocks - 1]
                means[nblocks - 2] = (
                    means[nblocks - 2] * wsum[nblocks - 2]
                    + means[nblocks - 1] * wsum[nblocks - 1]
                ) / w
                wsum[nblocks - 2] = w
                right[nblocks - 2] = right[nblocks - 1]
                nblocks -= 1
        fitted = np.empty(n, dtype=np.float64)
        start = 0
        for b in range(nblocks):
            for i in range(start, right[b]):
                fitted[i] = means[b]
            start = right[b]
        return fitted

    @numba.njit(cache=True)
    def _first_true_rule_nb(tri):  # pragma: no cover
        n_rules, n = tri.shape
        out = np.empty(n, dtype=np.int64)
        for j in range(n):
            fired = n_rules
            for r in range(n_rules):
                if tri[r, j] == 1:
                    fired = r
                    break
            out[j] = fired
        return out

    @numba.njit(cache=True)
    def _sample_rows_nb(cum, rows, u):  # pragma: no cover
        n = rows.shape[0]
        k = cum.shape[1]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            row = rows[i]
            pick = k - 1
            for c in range(k):
                if u[i] < cum[row, c]:
                    pick = c
                    break
            out[i] = pick
        return out


_BACKENDS = {"numpy": (_pav_fit_np, _first_true_rule_np, _sample_rows_np)}
if _HAVE_NUMBA:
    _BACKENDS["numba"] = (_pav_fit_nb, _first_true_rule_nb, _sample_rows_nb)

_active = "numpy"
pav_fit = _pav_fit_np
first_true_rule = _first_true_rule_np
sample_rows = _sample_rows_np


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active, pav_fit, first_true_rule, sample_rows
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {tuple(_BACKENDS)}")
    pav_fit, first_true_rule, sample_rows = _BACKENDS[name]
    _active = name


if _HAVE_NUMBA and not os.environ.get("ADSIM_NO_NUMBA"):
    set_backend("numba")
