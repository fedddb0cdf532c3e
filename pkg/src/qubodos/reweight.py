"""Canonical expectation values by thermodynamic reweighting.

Given the reconstructed density of states over an order-parameter bin
grid and per-bin conditional averages of an observable, the canonical
expectation at inverse temperature beta follows from the reweighted
ratio; all exponentials are handled in the log domain with a max shift
and magnitude-sorted accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .histogram import DensityOfStates
from .numerics import stable_weighted_mean

__all__ = [
    "ConditionalAverage",
    "CanonicalCurve",
    "canonical_expectation",
    "canonical_curve",
    "conditional_average",
]


@dataclass
class ConditionalAverage:
    """Per-bin mean of an observable over states with that bin value."""

    bins: np.ndarray
    means: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=int)
        self.means = np.asarray(self.means, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        if not len(self.bins) == len(self.means) == len(self.counts):
            raise ValueError("bins, means and counts must have the same length")
        if np.any(self.counts <= 0):
            raise ValueError("every bin present must have a positive count")

    def lookup(self) -> dict[int, float]:
        return {int(b): float(m) for b, m in zip(self.bins, self.means)}


@dataclass
class CanonicalCurve:
    """Expectation values on a strictly increasing beta grid."""

    betas: np.ndarray
    means: np.ndarray
    sems: np.ndarray | None = None

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        if not np.all(np.diff(self.betas) > 0):
            raise ValueError("beta grid must be strictly increasing")

    def to_text(self) -> str:
        lines = ["# beta_kappa\tmean\tsem"]
        for i, b in enumerate(self.betas):
            sem = 0.0 if self.sems is None else float(self.sems[i])
            lines.append(f"{b:.17g}\t{self.means[i]:.17g}\t{sem:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CanonicalCurve":
        betas, means, sems = [], [], []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            b, m, s = line.split("\t")
            betas.append(float(b))
            means.append(float(m))
            sems.append(float(s))
        return cls(
            betas=np.array(betas),
            means=np.array(means),
            sems=np.array(sems) if any(s != 0 for s in sems) else None,
        )


def _aligned(dos: DensityOfStates, cond: ConditionalAverage):
    """Observable values on the DOS bins, restricted to nonzero W."""
    lookup = cond.lookup()
    keep = dos.log_w > -np.inf
    bins = dos.bins[keep]
    missing = [int(b) for b in bins if int(b) not in lookup]
    if missing:
        raise ValueError(f"conditional average missing bins {missing[:5]}")
    vals = np.array([lookup[int(b)] for b in bins])
    return bins.astype(float), dos.log_w[keep], vals


def canonical_expectation(
    dos: DensityOfStates,
    cond: ConditionalAverage,
    beta: float,
    energy_of_bin=None,
) -> float:
    """<O>_beta = sum_E <O>_E W(E) e^(-beta E) / sum_E W(E) e^(-beta E).

    ``energy_of_bin`` maps a bin value to the energy entering the
    Boltzmann factor (identity by default; for melts the bin is n_c and
    beta stands for the reduced parameter beta*kappa_b).
    """
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    bins, log_w, vals = _aligned(dos, cond)
    energies = bins if energy_of_bin is None else np.array(
        [energy_of_bin(b) for b in bins], dtype=float
    )
    return stable_weighted_mean(log_w - beta * energies, vals)


def canonical_curve(
    dos: DensityOfStates,
    cond: ConditionalAverage,
    betas,
    block_dos_list: list[DensityOfStates] | None = None,
    energy_of_bin=None,
) -> CanonicalCurve:
    """Expectation values over a beta grid.

    With ``block_dos_list``, the whole curve is recomputed from each
    block reconstruction and the per-point SEM is the spread across the
    block curves (std / sqrt(s - 1)); the reported mean stays the curve
    of the primary reconstruction.
    """
    betas = np.asarray(betas, dtype=float)
    means = np.array(
        [canonical_expectation(dos, cond, b, energy_of_bin) for b in betas]
    )
    sems = None
    if block_dos_list:
        if len(block_dos_list) < 2:
            raise ValueError("need at least 2 block reconstructions for a SEM")
        block_curves = np.array(
            [
                [canonical_expectation(bd, cond, b, energy_of_bin) for b in betas]
                for bd in block_dos_list
            ]
        )
        s = len(block_dos_list)
        sems = block_curves.std(axis=0) / np.sqrt(s - 1)
    return CanonicalCurve(betas=betas, means=means, sems=sems)


def conditional_average(bin_values, observable_values) -> ConditionalAverage:
    """Pool observable samples from all sources and average per bin."""
    bins_arr = np.asarray(bin_values)
    obs_arr = np.asarray(observable_values, dtype=float)
    if bins_arr.shape != obs_arr.shape:
        raise ValueError("bin and observable arrays must have the same length")
    if bins_arr.size == 0:
        raise ValueError("no samples")
    uniq = np.unique(bins_arr)
    means = np.array([obs_arr[bins_arr == b].mean() for b in uniq])
    counts = np.array([int((bins_arr == b).sum()) for b in uniq])
    return ConditionalAverage(bins=uniq.astype(int), means=means, counts=counts)
