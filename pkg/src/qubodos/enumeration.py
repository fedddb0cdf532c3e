"""Exhaustive-enumeration ground truths for small Ising and melt systems.

These are test oracles: exact densities of states, full state sets, and
the resampled-reconstruction reference distribution used to benchmark
reconstructions at a given sampling depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .histogram import (
    DensityOfStates,
    HistogramSet,
    IntervalHistogram,
    SolverParams,
    reconstruct_approx,
    reconstruct_full,
)
from .ringmelt import CuboidLattice, RingConfiguration, geometric_corner_count

__all__ = [
    "ExactDos",
    "ReferenceDistribution",
    "enumerate_ising",
    "enumerate_melt",
    "reference_reconstructions",
]


@dataclass
class ExactDos:
    """Exact integer multiplicities per order-parameter bin."""

    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def normalized(self) -> dict[int, float]:
        t = self.total
        return {b: c / t for b, c in sorted(self.counts.items())}

    def to_dos(self) -> DensityOfStates:
        bins = np.array(sorted(self.counts), dtype=int)
        t = self.total
        log_w = np.log(np.array([self.counts[b] for b in bins], dtype=float) / t)
        return DensityOfStates(bins=bins, log_w=log_w, normalized=True)

    def to_text(self) -> str:
        lines = ["# bin\tlog10_W\tW\tcount"]
        for b, w in self.normalized().items():
            lines.append(f"{b}\t{np.log10(w):.17g}\t{w:.17g}\t{self.counts[b]}")
        return "\n".join(lines) + "\n"


@dataclass
class ReferenceDistribution:
    """Per-bin quartiles and 1.5-IQR whiskers over resampled reconstructions."""

    bins: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    whisker_lo: np.ndarray
    whisker_hi: np.ndarray
    samples: np.ndarray  # (R, n_bins) reconstructed W draws

    def covers(self, bin_value: int, w: float) -> tuple[bool, bool]:
        """(inside Q1..Q3, inside whiskers) for a reconstructed value."""
        i = int(np.searchsorted(self.bins, bin_value))
        if i >= len(self.bins) or self.bins[i] != bin_value:
            raise KeyError(f"bin {bin_value} not in reference distribution")
        in_box = self.q1[i] <= w <= self.q3[i]
        in_whiskers = self.whisker_lo[i] <= w <= self.whisker_hi[i]
        return in_box, in_whiskers


def enumerate_ising(L: int) -> tuple[ExactDos, np.ndarray]:
    """All 2^(L^2) spin assignments binned by the parallel-pair count.

    Returns the exact DOS over n_par and the per-state n_par array
    (state index = bit pattern of the row-major spin grid).
    """
    if L % 2 != 0 or L > 4:
        raise ValueError("exact enumeration supports even L <= 4")
    n = L * L
    states = np.arange(2**n, dtype=np.uint32)
    # row-major bit order: bit (r*L + c) = spin at (r, c)
    bits = (states[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1
    grid = bits.reshape(-1, L, L).astype(np.int8)
    parallel = np.zeros(len(states), dtype=np.int32)
    parallel += np.sum(grid == np.roll(grid, -1, axis=2), axis=(1, 2))
    parallel += np.sum(grid == np.roll(grid, -1, axis=1), axis=(1, 2))
    if np.any(parallel % 2):
        raise AssertionError("parallel-edge totals must be even")
    n_par = parallel // 2
    values, counts = np.unique(n_par, return_counts=True)
    return ExactDos(dict(zip(values.tolist(), counts.tolist()))), n_par


def enumerate_melt(
    lattice: CuboidLattice,
) -> tuple[ExactDos, list[RingConfiguration]]:
    """All space-filling ring configurations, binned by corner count.

    Depth-first search over edge subsets with degree-2 pruning; no
    symmetry reduction.
    """
    if lattice.n_sites > 18:
        raise ValueError("exact enumeration supports at most 18 sites")
    n_sites, n_edges = lattice.n_sites, lattice.n_edges
    edges = lattice.edges
    # per site: number of incident edges still undecided
    undecided = [len(lattice.incident[i]) for i in range(n_sites)]
    degree = [0] * n_sites
    active: list[int] = []
    solutions: list[frozenset[int]] = []

    def feasible(site: int) -> bool:
        return degree[site] <= 2 and degree[site] + undecided[site] >= 2

    def walk(e: int, n_active: int) -> None:
        if e == n_edges:
            if n_active == n_sites and all(d == 2 for d in degree):
                solutions.append(frozenset(active))
            return
        if n_active + (n_edges - e) < n_sites or n_active > n_sites:
            return
        i, j = edges[e]
        undecided[i] -= 1
        undecided[j] -= 1
        # inactive branch
        if feasible(i) and feasible(j):
            walk(e + 1, n_active)
        # active branch
        degree[i] += 1
        degree[j] += 1
        if feasible(i) and feasible(j):
            active.append(e)
            walk(e + 1, n_active + 1)
            active.pop()
        degree[i] -= 1
        degree[j] -= 1
        undecided[i] += 1
        undecided[j] += 1

    walk(0, 0)

    configs: list[RingConfiguration] = []
    counts: dict[int, int] = {}
    for bond_set in solutions:
        n_c = geometric_corner_count(lattice, set(bond_set))
        rings = _rings_from_bonds(lattice, bond_set)
        configs.append(
            RingConfiguration(dims=lattice.dims, rings=rings, n_c=n_c)
        )
        counts[n_c] = counts.get(n_c, 0) + 1
    return ExactDos(counts), configs


def _rings_from_bonds(
    lattice: CuboidLattice, bond_set: frozenset[int]
) -> list[list[int]]:
    neighbors: dict[int, list[int]] = {i: [] for i in range(lattice.n_sites)}
    for e in bond_set:
        i, j = lattice.edges[e]
        neighbors[i].append(j)
        neighbors[j].append(i)
    rings: list[list[int]] = []
    seen = [False] * lattice.n_sites
    for start in range(lattice.n_sites):
        if seen[start]:
            continue
        ring = [start]
        seen[start] = True
        prev, cur = start, min(neighbors[start])
        while cur != start:
            ring.append(cur)
            seen[cur] = True
            nxt = next(n for n in neighbors[cur] if n != prev)
            prev, cur = cur, nxt
        rings.append(ring)
    return rings


def reference_reconstructions(
    exact_bins: np.ndarray,
    intervals: list[tuple[int, int, int]],
    depth: int,
    repeats: int,
    params: SolverParams | None = None,
    seed: int = 0,
) -> ReferenceDistribution:
    """Reference distribution of reconstructions from unbiased resampling.

    ``exact_bins`` holds the order-parameter value of every enumerated
    state; each repeat draws ``depth`` states uniformly (with
    replacement) per interval, histograms them, reconstructs, and records
    the per-bin W.
    """
    if params is None:
        params = SolverParams()
    rng = np.random.default_rng(seed)
    exact_bins = np.asarray(exact_bins)
    observed = np.unique(exact_bins)
    pools = {}
    for iid, lo, hi in intervals:
        pool = exact_bins[(exact_bins >= lo) & (exact_bins <= hi)]
        if pool.size == 0:
            raise ValueError(f"interval {iid} [{lo}, {hi}] contains no states")
        pools[iid] = pool

    draws = np.zeros((repeats, len(observed)))
    for r in range(repeats):
        hists = []
        for iid, lo, hi in intervals:
            sample = rng.choice(pools[iid], size=depth, replace=True)
            values, counts = np.unique(sample, return_counts=True)
            hists.append(
                IntervalHistogram(
                    interval_id=iid,
                    bin_min=lo,
                    bin_max=hi,
                    counts=dict(zip(values.tolist(), counts.tolist())),
                    total=depth,
                )
            )
        hset = HistogramSet(hists)
        dos = reconstruct_full(hset, reconstruct_approx(hset, params), params)
        w = dos.as_dict()
        draws[r] = [w.get(int(b), 0.0) for b in observed]

    q1 = np.percentile(draws, 25, axis=0)
    q2 = np.percentile(draws, 50, axis=0)
    q3 = np.percentile(draws, 75, axis=0)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    whisker_lo = np.empty_like(q1)
    whisker_hi = np.empty_like(q3)
    for i in range(len(observed)):
        col = draws[:, i]
        inside = col[(col >= lo_fence[i]) & (col <= hi_fence[i])]
        whisker_lo[i] = inside.min() if inside.size else q1[i]
        whisker_hi[i] = inside.max() if inside.size else q3[i]
    return ReferenceDistribution(
        bins=observed,
        q1=q1,
        q2=q2,
        q3=q3,
        whisker_lo=whisker_lo,
        whisker_hi=whisker_hi,
        samples=draws,
    )
