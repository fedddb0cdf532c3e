"""Density-of-states reconstruction from interval histograms.

The self-consistent equations tie the per-interval histograms to the
density of states through the interval partition sums; they are solved
with a damped two-step iteration: a simplified initializer (valid when
every W element is small compared to the partition sums of the intervals
containing it) followed by the full relaxation with a nested damped
update of an auxiliary partition-sum array.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import sorted_sum

__all__ = [
    "IntervalHistogram",
    "HistogramSet",
    "DensityOfStates",
    "SolverParams",
    "SolveDiagnostics",
    "ReconstructionError",
    "reconstruct_approx",
    "reconstruct_full",
    "fixed_point_residual",
    "block_reconstruct",
]

_RATIO_FLOOR = 1e-15


class ReconstructionError(ValueError):
    pass


@dataclass
class IntervalHistogram:
    """Bin counts collected while sampling one order-parameter interval."""

    interval_id: int
    bin_min: int
    bin_max: int
    counts: dict[int, float]
    total: float
    g: float = 1.0

    def __post_init__(self):
        if self.bin_max < self.bin_min:
            raise ValueError("bin_max < bin_min")
        if self.g < 1.0:
            raise ValueError("autocorrelation factor g must be >= 1")
        for b in self.counts:
            if not self.bin_min <= b <= self.bin_max:
                raise ValueError(f"count at bin {b} outside [{self.bin_min}, {self.bin_max}]")
        csum = sum(self.counts.values())
        if abs(csum - self.total) > 1e-9 * max(1.0, self.total):
            raise ValueError(f"counts sum {csum} != total {self.total}")

    @classmethod
    def from_samples(
        cls, interval_id: int, bin_min: int, bin_max: int, samples, g: float = 1.0
    ) -> "IntervalHistogram":
        values, counts = np.unique(np.asarray(samples, dtype=int), return_counts=True)
        return cls(
            interval_id=interval_id,
            bin_min=bin_min,
            bin_max=bin_max,
            counts=dict(zip(values.tolist(), counts.tolist())),
            total=int(counts.sum()),
            g=g,
        )


class HistogramSet:
    """A collection of interval histograms over a shared integer bin grid."""

    def __init__(self, histograms: list[IntervalHistogram]):
        if not histograms:
            raise ValueError("empty histogram set")
        self.histograms = list(histograms)
        lo = min(h.bin_min for h in self.histograms)
        hi = max(h.bin_max for h in self.histograms)
        self.bins = np.arange(lo, hi + 1)
        nb = len(self.bins)
        nj = len(self.histograms)
        self.mask = np.zeros((nj, nb), dtype=bool)
        self.n = np.zeros((nj, nb))
        self.totals = np.zeros(nj)
        self.g = np.ones(nj)
        for j, h in enumerate(self.histograms):
            self.mask[j, h.bin_min - lo : h.bin_max - lo + 1] = True
            for b, c in h.counts.items():
                self.n[j, b - lo] = c
            self.totals[j] = h.total
            self.g[j] = h.g
        self.observed = self.n.sum(axis=0) > 0

    def coverage_gaps(self) -> list[int]:
        covered = self.mask.any(axis=0)
        return [int(b) for b, c in zip(self.bins, covered) if not c]

    def observed_bins(self) -> np.ndarray:
        return self.bins[self.observed]

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        buf = io.StringIO()
        for h in self.histograms:
            buf.write(f"{h.interval_id} {h.bin_min} {h.bin_max} {h.g!r}\n")
            for b in sorted(h.counts):
                buf.write(f"{b} {h.counts[b]!r}\n")
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "HistogramSet":
        hists = []
        block: list[str] = []
        for line in text.splitlines() + [""]:
            if line.strip():
                block.append(line)
                continue
            if block:
                head = block[0].split()
                counts = {}
                for ln in block[1:]:
                    b, c = ln.split()
                    counts[int(b)] = float(c)
                hists.append(
                    IntervalHistogram(
                        interval_id=int(head[0]),
                        bin_min=int(head[1]),
                        bin_max=int(head[2]),
                        counts=counts,
                        total=sum(counts.values()),
                        g=float(head[3]),
                    )
                )
                block = []
        return cls(hists)


@dataclass
class SolveDiagnostics:
    converged: bool
    iterations: int
    final_delta: float
    residual: float
    ratio_clamped: bool
    mix_used: float


@dataclass
class DensityOfStates:
    """Log-domain density of states on an integer bin grid.

    Bins never observed carry ``-inf`` log values (exactly zero weight).
    """

    bins: np.ndarray
    log_w: np.ndarray
    normalized: bool = False
    sem: np.ndarray | None = None
    diagnostics: SolveDiagnostics | None = None

    def w(self) -> np.ndarray:
        return np.exp(self.log_w)

    def as_dict(self) -> dict[int, float]:
        return {int(b): float(w) for b, w in zip(self.bins, self.w())}

    def normalize(self) -> "DensityOfStates":
        total = sorted_sum(self.w())
        if total <= 0:
            raise ValueError("cannot normalize an all-zero density of states")
        with np.errstate(divide="ignore"):
            log_w = self.log_w - np.log(total)
        return DensityOfStates(
            bins=self.bins.copy(),
            log_w=log_w,
            normalized=True,
            sem=None if self.sem is None else self.sem / total,
            diagnostics=self.diagnostics,
        )

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("# bin\tlog10_W\tW\tsem\n")
        w = self.w()
        for i, b in enumerate(self.bins):
            if self.log_w[i] == -np.inf:
                continue  # zero bins carry no entry
            sem = 0.0 if self.sem is None else float(self.sem[i])
            log10 = self.log_w[i] / np.log(10.0)
            buf.write(f"{int(b)}\t{log10:.17g}\t{w[i]:.17g}\t{sem:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "DensityOfStates":
        bins, log_w, sems = [], [], []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            b, log10, _w, sem = line.split("\t")
            bins.append(int(b))
            log_w.append(float(log10) * np.log(10.0))
            sems.append(float(sem))
        return cls(
            bins=np.array(bins, dtype=int),
            log_w=np.array(log_w),
            normalized=True,
            sem=np.array(sems) if any(s != 0 for s in sems) else None,
        )


@dataclass
class SolverParams:
    mix: float = 0.1
    n_cycles: int = 100
    epsilon: float = 1e-15
    n_iter: int = 50_000

    def __post_init__(self):
        if not 0 < self.mix < 1:
            raise ValueError("mix must lie in (0, 1)")
        if self.n_cycles < 1 or self.n_iter < 1:
            raise ValueError("cycle/iteration counts must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _require_gapless(hset: HistogramSet) -> None:
    gaps = hset.coverage_gaps()
    if gaps:
        raise ReconstructionError(f"coverage gap at bins {gaps}")


def _interval_sums(hset: HistogramSet, w: np.ndarray) -> np.ndarray:
    """Partition sum of W over each interval, summands sorted ascending."""
    z = np.empty(len(hset.histograms))
    for j in range(len(hset.histograms)):
        z[j] = sorted_sum(np.sort(w[hset.mask[j]]))
    return z


def _normalized(w: np.ndarray) -> np.ndarray:
    return w / sorted_sum(np.sort(w))


def _masked_column_sums(terms: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-bin sums over intervals with ascending-ordered summands."""
    vals = np.where(mask, terms, 0.0)
    return np.sort(vals, axis=0).sum(axis=0)


def _result(hset: HistogramSet, w: np.ndarray, diag: SolveDiagnostics) -> DensityOfStates:
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    return DensityOfStates(
        bins=hset.bins.copy(),
        log_w=log_w,
        normalized=True,
        diagnostics=diag,
    )


def reconstruct_approx(
    hset: HistogramSet, params: SolverParams | None = None
) -> DensityOfStates:
    """Iterate the simplified self-consistent update to convergence.

    Valid in the limit where each W element is small compared to the
    partition sums of the intervals containing it; for histogram sets
    overlapping only at edge bins the converged result reproduces the
    consecutive-ratio chain of the analytic solution.
    """
    if params is None:
        params = SolverParams()
    _require_gapless(hset)
    alpha = params.mix
    obs = hset.observed
    if not obs.any():
        raise ReconstructionError("no observed bins")
    w = np.where(obs, 1.0, 0.0)
    w = _normalized(w)
    z_damp = _interval_sums(hset, w)

    num = _masked_column_sums(
        (hset.n.T / hset.g).T, hset.mask
    )  # constant across iterations
    delta = np.inf
    it = 0
    while delta >= params.epsilon and it < params.n_iter:
        den = _masked_column_sums(
            np.broadcast_to(
                (hset.totals / (z_damp * hset.g))[:, None], hset.mask.shape
            ),
            hset.mask,
        )
        w_new = w.copy()
        w_new[obs] = alpha * num[obs] / den[obs] + (1 - alpha) * w[obs]
        w_new = _normalized(w_new)
        z = _interval_sums(hset, w_new)
        z_damp = alpha * z + (1 - alpha) * z_damp
        delta = float(np.sum(np.abs(w_new[obs] - w[obs]) / w[obs]))
        w = w_new
        it += 1
    diag = SolveDiagnostics(
        converged=delta < params.epsilon,
        iterations=it,
        final_delta=delta,
        residual=float("nan"),
        ratio_clamped=False,
        mix_used=alpha,
    )
    return _result(hset, w, diag)


def reconstruct_full(
    hset: HistogramSet,
    init: DensityOfStates,
    params: SolverParams | None = None,
) -> DensityOfStates:
    """Solve the full self-consistent equations by nested damped relaxation.

    The inner loop relaxes W with the auxiliary damped partition sums held
    fixed in the denominator; the auxiliary array itself is damped once
    per outer cycle.  A divergence monitor halves the mixing coefficient
    and aborts the cycle if the residual change grows tenfold.
    """
    if params is None:
        params = SolverParams()
    _require_gapless(hset)
    obs = hset.observed
    w = _project_init(hset, init)
    if np.any(w[obs] <= 0):
        raise ReconstructionError("init must be nonzero on all observed bins")
    w = _normalized(w)
    alpha = params.mix
    z = _interval_sums(hset, w)
    z_damp = z.copy()
    clamped = False
    total_iters = 0
    delta = np.inf

    for _cycle in range(params.n_cycles):
        c = 1
        delta_first = None
        while True:
            raw = 1.0 - np.divide(
                w[None, :], z[:, None], out=np.zeros((len(z), len(w))), where=z[:, None] > 0
            )
            if np.any(raw[hset.mask] < _RATIO_FLOOR):
                clamped = True
            ratio = np.maximum(raw, _RATIO_FLOOR)
            num = _masked_column_sums(hset.n / (hset.g[:, None] * ratio), hset.mask)
            den = _masked_column_sums(
                (hset.totals / (z_damp * hset.g))[:, None] / ratio, hset.mask
            )
            w_new = w.copy()
            w_new[obs] = alpha * num[obs] / den[obs] + (1 - alpha) * w[obs]
            w_new = _normalized(w_new)
            z = _interval_sums(hset, w_new)
            delta = float(np.sum(np.abs(w_new[obs] - w[obs]) / w[obs]))
            w = w_new
            c += 1
            total_iters += 1
            if delta_first is None:
                delta_first = delta
            if delta < params.epsilon or c >= params.n_iter:
                break
            if delta > 10 * delta_first:
                alpha = alpha / 2
                break
        z_damp = alpha * z + (1 - alpha) * z_damp

    diag = SolveDiagnostics(
        converged=delta < params.epsilon,
        iterations=total_iters,
        final_delta=delta,
        residual=0.0,
        ratio_clamped=clamped,
        mix_used=alpha,
    )
    result = _result(hset, w, diag)
    diag.residual = fixed_point_residual(hset, result)
    if not diag.converged:
        warnings.warn(
            f"reconstruction did not converge: delta={delta:.3e}, "
            f"residual={diag.residual:.3e}",
            stacklevel=2,
        )
    return result


def _project_init(hset: HistogramSet, init: DensityOfStates) -> np.ndarray:
    """Align an initial DOS onto this set's bin grid (zero off-grid bins)."""
    w = np.zeros(len(hset.bins))
    lookup = init.as_dict()
    for i, b in enumerate(hset.bins):
        w[i] = lookup.get(int(b), 0.0)
    return w


def fixed_point_residual(hset: HistogramSet, dos: DensityOfStates) -> float:
    """Max relative deviation between W and the self-consistent right side."""
    w = _project_init(hset, dos)
    obs = hset.observed
    z = _interval_sums(hset, w)
    ratio = 1.0 - np.divide(
        w[None, :], z[:, None], out=np.zeros((len(z), len(w))), where=z[:, None] > 0
    )
    ratio = np.maximum(ratio, _RATIO_FLOOR)
    num = _masked_column_sums(hset.n / (hset.g[:, None] * ratio), hset.mask)
    den = _masked_column_sums(
        (hset.totals / (z_damp_safe(z) * hset.g))[:, None] / ratio, hset.mask
    )
    rhs = np.zeros_like(w)
    rhs[obs] = num[obs] / den[obs]
    rel = np.abs(w[obs] - rhs[obs]) / w[obs]
    return float(rel.max()) if rel.size else 0.0


def z_damp_safe(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, 1.0)


def block_reconstruct(
    samples_per_interval: dict[int, tuple[tuple[int, int], list[int]]],
    s: int,
    params: SolverParams | None = None,
) -> tuple[DensityOfStates, DensityOfStates]:
    """Blocked error analysis of the reconstruction.

    ``samples_per_interval`` maps interval id -> ((bin_min, bin_max),
    ordered bin values).  Each interval's samples are split into ``s``
    equal consecutive blocks (block inputs are treated as uncorrelated,
    g = 1); the s independent reconstructions give the per-bin mean and
    SEM = std / sqrt(s - 1).

    Returns (mean DOS with per-bin SEM, DOS of per-bin std), the second
    mainly for diagnostics.
    """
    if s < 2:
        raise ValueError("need at least 2 blocks")
    if params is None:
        params = SolverParams()
    block_sets: list[HistogramSet] = []
    for k in range(s):
        hists = []
        for iid, ((lo, hi), vals) in sorted(samples_per_interval.items()):
            per = len(vals) // s
            if per == 0:
                raise ValueError(f"interval {iid} has fewer samples than blocks")
            chunk = vals[k * per : (k + 1) * per]
            hists.append(
                IntervalHistogram.from_samples(iid, lo, hi, chunk, g=1.0)
            )
        block_sets.append(HistogramSet(hists))

    all_bins = np.unique(np.concatenate([bs.bins for bs in block_sets]))
    stack = np.zeros((s, len(all_bins)))
    for k, bs in enumerate(block_sets):
        dos = reconstruct_full(bs, reconstruct_approx(bs, params), params)
        lookup = dos.as_dict()
        stack[k] = [lookup.get(int(b), 0.0) for b in all_bins]
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)  # population spread across block estimates
    sem = std / np.sqrt(s - 1)
    with np.errstate(divide="ignore"):
        mean_dos = DensityOfStates(
            bins=all_bins, log_w=np.log(mean), normalized=True, sem=sem
        )
        std_dos = DensityOfStates(bins=all_bins, log_w=np.log(z_damp_safe(std)))
    return mean_dos, std_dos
