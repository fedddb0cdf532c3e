"""Numerically careful summation helpers shared by the solvers.

The reconstructed densities of states can span tens of orders of magnitude,
so every reduction over them orders the summands by magnitude (smallest
first) and uses compensated summation.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["sorted_sum", "logsumexp_sorted", "stable_weighted_mean"]


def sorted_sum(values) -> float:
    """Compensated sum with summands ordered by increasing magnitude."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        return 0.0
    order = np.argsort(np.abs(arr), kind="stable")
    return math.fsum(arr[order])


def logsumexp_sorted(log_terms) -> float:
    """log(sum(exp(x))) with max-shift and magnitude-sorted accumulation."""
    arr = np.asarray(log_terms, dtype=float).ravel()
    arr = arr[arr > -np.inf]
    if arr.size == 0:
        return -np.inf
    m = float(np.max(arr))
    return m + math.log(sorted_sum(np.exp(arr - m)))


def stable_weighted_mean(log_weights, values) -> float:
    """Weighted mean of ``values`` with weights ``exp(log_weights)``.

    Overflow-safe for arbitrarily large or small log-weights; the common
    scale cancels in the ratio.  Raises ``ValueError`` when every weight
    vanishes.
    """
    lw = np.asarray(log_weights, dtype=float).ravel()
    vals = np.asarray(values, dtype=float).ravel()
    if lw.shape != vals.shape:
        raise ValueError("log_weights and values must have the same length")
    keep = lw > -np.inf
    lw, vals = lw[keep], vals[keep]
    if lw.size == 0:
        raise ValueError("all weights vanish")
    if not (np.all(np.isfinite(lw)) and np.all(np.isfinite(vals))):
        raise ValueError("non-finite inputs")
    w = np.exp(lw - np.max(lw))
    den = sorted_sum(w)
    num = sorted_sum(w * vals)
    return num / den
