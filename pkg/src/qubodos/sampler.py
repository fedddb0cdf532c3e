"""Parallel-tempering ground-state sampler for QUBO models.

A ladder of Metropolis replicas spans temperatures from far above the
random-state energy scale down to far below the single-flip scale;
adjacent replicas exchange configurations with the standard swap
acceptance.  Ground states are harvested from the coldest replica at a
decorrelation stride and validated before they enter the archive.

Single-flip moves alternate strictly between the non-slack and the slack
variable sets, so slack variables equilibrate quickly even when they are
few.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .qubo import QuboModel, random_state, state_from_hex, state_to_hex

__all__ = [
    "TemperatureLadder",
    "SamplerConfig",
    "SampleRecord",
    "SampleArchive",
    "CalibrationError",
    "calibrate_ladder",
    "run",
    "estimate_autocorrelation",
]


class CalibrationError(RuntimeError):
    pass


@dataclass
class TemperatureLadder:
    """Descending sequence of reduced temperatures."""

    temps: np.ndarray

    def __post_init__(self):
        self.temps = np.asarray(self.temps, dtype=float)
        if len(self.temps) < 2:
            raise ValueError("ladder needs at least two temperatures")
        if not np.all(np.diff(self.temps) < 0):
            raise ValueError("temperatures must be strictly decreasing")
        if np.any(self.temps <= 0):
            raise ValueError("temperatures must be positive")

    @property
    def n_replicas(self) -> int:
        return len(self.temps)

    @property
    def t_max(self) -> float:
        return float(self.temps[0])

    @property
    def t_min(self) -> float:
        return float(self.temps[-1])


@dataclass
class SamplerConfig:
    total_sweeps: int
    seed: int
    decorrelation_stride: int = 10
    sweeps_per_exchange: int = 1
    burn_in_fraction: float = 0.1
    slack_var_set: frozenset[int] = frozenset()
    resync_interval: int = 10_000

    def __post_init__(self):
        if self.total_sweeps < 1:
            raise ValueError("total_sweeps must be positive")
        if self.decorrelation_stride < 1:
            raise ValueError("stride must be >= 1")
        if self.sweeps_per_exchange < 1:
            raise ValueError("sweeps_per_exchange must be >= 1")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        self.slack_var_set = frozenset(self.slack_var_set)


@dataclass
class SampleRecord:
    interval_id: int
    bin_value: int
    state_hex: str
    sweep: int
    seed: int


class SampleArchive:
    """Append-only collection of validated ground-state records."""

    def __init__(self, model_hash: str, records: list[SampleRecord] | None = None):
        self.model_hash = model_hash
        self.records: list[SampleRecord] = list(records or [])
        self.rejected = 0

    def append(self, record: SampleRecord) -> None:
        self.records.append(record)

    def extend(self, other: "SampleArchive") -> None:
        if other.model_hash != self.model_hash:
            raise ValueError("archives built from different models")
        self.records.extend(other.records)
        self.rejected += other.rejected

    def bin_values(self, interval_id: int | None = None) -> list[int]:
        return [
            r.bin_value
            for r in self.records
            if interval_id is None or r.interval_id == interval_id
        ]

    def states(self, num_vars: int, interval_id: int | None = None) -> np.ndarray:
        rows = [
            state_from_hex(r.state_hex, num_vars)
            for r in self.records
            if interval_id is None or r.interval_id == interval_id
        ]
        return np.array(rows, dtype=np.int8).reshape(len(rows), num_vars)

    def interval_ids(self) -> list[int]:
        return sorted({r.interval_id for r in self.records})

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# model {self.model_hash}\n")
        for r in self.records:
            buf.write(
                f"{r.interval_id} {r.bin_value} {r.state_hex} {r.sweep} {r.seed}\n"
            )
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "SampleArchive":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# model "):
            raise ValueError("missing model hash header")
        archive = cls(model_hash=lines[0].split()[2])
        for ln in lines[1:]:
            if not ln.strip() or ln.startswith("#"):
                continue
            iid, bv, hx, sweep, seed = ln.split()
            archive.append(
                SampleRecord(int(iid), int(bv), hx, int(sweep), int(seed))
            )
        return archive


# -- ladder calibration ----------------------------------------------------


class _KernelArrays:
    """Flat CSR views of a model for the numba sweep kernel.

    Base linear/quadratic terms live in one CSR; unexpanded penalty forms
    in a second one mapping each variable to its (penalty, coefficient)
    entries, evaluated through per-replica running form values.
    """

    def __init__(self, model: QuboModel):
        adj = model.adjacency()
        indptr = np.zeros(model.num_vars + 1, dtype=np.int64)
        idx: list[int] = []
        dat: list[float] = []
        for i in range(model.num_vars):
            for j, c in sorted(adj[i]):
                idx.append(j)
                dat.append(c)
            indptr[i + 1] = len(idx)
        self.h = np.zeros(model.num_vars)
        for i, c in model.linear.items():
            self.h[i] = c
        self.indptr = indptr
        self.indices = np.array(idx, dtype=np.int64)
        self.data = np.array(dat)

        p_idx: list[int] = []
        p_coeff: list[float] = []
        p_indptr = np.zeros(model.num_vars + 1, dtype=np.int64)
        by_var: dict[int, list[tuple[int, float]]] = {}
        for p, term in enumerate(model.penalties):
            for i, a in term.form.coeffs.items():
                by_var.setdefault(i, []).append((p, float(a)))
        for i in range(model.num_vars):
            for p, a in by_var.get(i, []):
                p_idx.append(p)
                p_coeff.append(a)
            p_indptr[i + 1] = len(p_idx)
        self.p_indptr = p_indptr
        self.p_idx = np.array(p_idx, dtype=np.int64)
        self.p_coeff = np.array(p_coeff)
        a, c, w = model.penalty_arrays()
        self.p_a, self.p_c, self.p_w = a, c, w

    def form_values(self, states: np.ndarray) -> np.ndarray:
        """(n_replicas, n_penalties) running linear-form values."""
        return states.astype(float) @ self.p_a.T + self.p_c


def _fluctuation_scales(model: QuboModel, rng, n_random: int = 200):
    states = rng.integers(0, 2, size=(n_random, model.num_vars), dtype=np.int8)
    energies = model.evaluate_batch(states)
    e_rms = float(np.std(energies))
    deltas = [model.all_flip_deltas(s) for s in states[: min(50, n_random)]]
    flip_rms = float(np.sqrt(np.mean(np.square(np.concatenate(deltas)))))
    return e_rms, flip_rms


def _histogram_overlap(e1: np.ndarray, e2: np.ndarray) -> float:
    """Intersection coefficient of two normalized energy histograms."""
    lo = min(e1.min(), e2.min())
    hi = max(e1.max(), e2.max())
    if hi == lo:
        return 1.0
    edges = np.linspace(lo, hi, 41)
    p1, _ = np.histogram(e1, bins=edges)
    p2, _ = np.histogram(e2, bins=edges)
    p1 = p1 / p1.sum()
    p2 = p2 / p2.sum()
    return float(np.minimum(p1, p2).sum())


def calibrate_ladder(
    model: QuboModel,
    seed: int,
    slack_var_set: frozenset[int] = frozenset(),
    overlap_threshold: float = 0.3,
    max_rounds: int = 10,
    pilot_sweeps: int = 200,
    t_max_factor: float = 10**2.5,
    t_min_factor: float = 1e-3,
) -> TemperatureLadder:
    """Build and refine the temperature ladder with preliminary runs.

    By default T_max sits 2.5 orders of magnitude above the random-state
    RMS energy fluctuation and T_min three orders below the RMS
    single-flip change; large frustrated models may need a smaller
    ``t_min_factor``, since the random-state flip scale far exceeds the
    near-ground-state one.  Starting from a geometric ladder of
    2 sqrt(n) replicas, short pilot runs insert geometric-mean
    temperatures between any adjacent pair whose energy histograms fail
    the overlap criterion.
    """
    if t_max_factor <= 0 or t_min_factor <= 0:
        raise ValueError("ladder factors must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCA11]))
    e_rms, flip_rms = _fluctuation_scales(model, rng)
    if e_rms == 0.0 and flip_rms == 0.0:
        raise CalibrationError("degenerate model: no energy fluctuations")
    scale = max(e_rms, flip_rms)
    t_max = t_max_factor * (e_rms if e_rms > 0 else scale)
    t_min = t_min_factor * (flip_rms if flip_rms > 0 else scale)
    if t_min >= t_max:
        t_min = t_max * 1e-6
    n_r = max(2, round(2 * np.sqrt(model.num_vars)))
    temps = np.geomspace(t_max, t_min, n_r)

    for _round in range(max_rounds):
        traces = _pilot_energy_traces(
            model, TemperatureLadder(temps.copy()), slack_var_set, rng, pilot_sweeps
        )
        overlaps = [
            _histogram_overlap(traces[i], traces[i + 1])
            for i in range(len(temps) - 1)
        ]
        if all(o >= overlap_threshold for o in overlaps):
            break
        refined = [temps[0]]
        for i, o in enumerate(overlaps):
            if o < overlap_threshold:
                refined.append(float(np.sqrt(temps[i] * temps[i + 1])))
            refined.append(temps[i + 1])
        temps = np.array(refined)
    return TemperatureLadder(temps)


def _pilot_energy_traces(model, ladder, slack_var_set, rng, sweeps):
    """Post-burn-in energy trace per replica from a short run."""
    config = SamplerConfig(
        total_sweeps=sweeps,
        seed=int(rng.integers(0, 2**63)),
        decorrelation_stride=1,
        slack_var_set=slack_var_set,
        burn_in_fraction=0.5,
    )
    _, diag = _run_chain(model, config, ladder, collect_energy_traces=True)
    return diag["energy_traces"]


# -- core chain ------------------------------------------------------------


@njit(cache=True, nogil=True)
def _chunk_kernel(
    states,
    energies,
    perm,
    h,
    indptr,
    indices,
    data,
    p_indptr,
    p_idx,
    p_coeff,
    p_w,
    pv,
    betas,
    var_pick,
    acc_u,
    exch_u,
    sweeps_per_exchange,
    cold_out,
    energy_out,
):
    n_sweeps, n_replicas, attempts = var_pick.shape
    n = states.shape[1]
    for s in range(n_sweeps):
        for pos in range(n_replicas):
            r = perm[pos]
            beta = betas[pos]
            e = energies[r]
            for a in range(attempts):
                i = var_pick[s, pos, a]
                acc = h[i]
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * states[r, indices[k]]
                step = 1.0 - 2.0 * states[r, i]
                delta = step * acc
                for k in range(p_indptr[i], p_indptr[i + 1]):
                    cf = p_coeff[k]
                    delta += p_w[p_idx[k]] * (
                        2.0 * cf * pv[r, p_idx[k]] * step + cf * cf
                    )
                if delta <= 0.0 or acc_u[s, pos, a] < np.exp(-beta * delta):
                    states[r, i] = 1 - states[r, i]
                    for k in range(p_indptr[i], p_indptr[i + 1]):
                        pv[r, p_idx[k]] += p_coeff[k] * step
                    e += delta
            energies[r] = e
        if (s + 1) % sweeps_per_exchange == 0:
            for parity in range(2):
                for pos in range(parity, n_replicas - 1, 2):
                    ra, rb = perm[pos], perm[pos + 1]
                    arg = (betas[pos + 1] - betas[pos]) * (
                        energies[rb] - energies[ra]
                    )
                    if arg >= 0.0 or exch_u[s, pos] < np.exp(arg):
                        perm[pos], perm[pos + 1] = rb, ra
        cold = perm[n_replicas - 1]
        for i in range(n):
            cold_out[s, i] = states[cold, i]
        for pos in range(n_replicas):
            energy_out[s, pos] = energies[perm[pos]]


def exchange_acceptance(beta_a: float, beta_b: float, e_a: float, e_b: float) -> float:
    """Swap acceptance min(1, exp(dbeta * dE)) for replicas a (hot) and b."""
    return float(min(1.0, np.exp((beta_b - beta_a) * (e_b - e_a))))


def _run_chain(
    model: QuboModel,
    config: SamplerConfig,
    ladder: TemperatureLadder,
    collect_energy_traces: bool = False,
    harvest=None,
):
    """Advance the replica system; optionally harvest the coldest state.

    ``harvest(sweep, state)`` is called at every decorrelation stride
    after burn-in with the coldest replica's current state.
    """
    n = model.num_vars
    n_r = ladder.n_replicas
    betas = 1.0 / ladder.temps
    slack = np.array(sorted(config.slack_var_set), dtype=np.int64)
    nonslack = np.array(
        [i for i in range(n) if i not in config.slack_var_set], dtype=np.int64
    )
    if slack.size and np.any((slack < 0) | (slack >= n)):
        raise ValueError("slack set contains out-of-range indices")
    if nonslack.size == 0:
        raise ValueError("no non-slack variables")

    ss = np.random.SeedSequence([config.seed, 0x5A3])
    children = ss.spawn(n_r + 2)
    replica_rngs = [np.random.default_rng(c) for c in children[:n_r]]
    exch_rng = np.random.default_rng(children[n_r])
    init_rng = np.random.default_rng(children[n_r + 1])

    states = np.stack([random_state(n, init_rng) for _ in range(n_r)])
    energies = model.evaluate_batch(states)
    perm = np.arange(n_r, dtype=np.int64)
    kernel = _KernelArrays(model)
    pv = kernel.form_values(states)

    burn_in = int(config.total_sweeps * config.burn_in_fraction)
    traces: list[list[float]] = [[] for _ in range(n_r)]
    max_drift = 0.0
    chunk = 64

    sweep = 0
    next_resync = config.resync_interval
    while sweep < config.total_sweeps:
        s_chunk = min(chunk, config.total_sweeps - sweep)
        var_pick = np.empty((s_chunk, n_r, n), dtype=np.int64)
        acc_u = np.empty((s_chunk, n_r, n))
        for pos in range(n_r):
            rng = replica_rngs[pos]
            if slack.size:
                # strict alternation: even attempts non-slack, odd slack
                picks = np.empty((s_chunk, n), dtype=np.int64)
                n_even = (n + 1) // 2
                picks[:, 0::2] = nonslack[
                    rng.integers(0, nonslack.size, size=(s_chunk, n_even))
                ]
                picks[:, 1::2] = slack[
                    rng.integers(0, slack.size, size=(s_chunk, n - n_even))
                ]
            else:
                picks = nonslack[rng.integers(0, nonslack.size, size=(s_chunk, n))]
            var_pick[:, pos, :] = picks
            acc_u[:, pos, :] = rng.random((s_chunk, n))
        exch_u = exch_rng.random((s_chunk, n_r))
        cold_out = np.empty((s_chunk, n), dtype=np.int8)
        energy_out = np.empty((s_chunk, n_r))

        _chunk_kernel(
            states,
            energies,
            perm,
            kernel.h,
            kernel.indptr,
            kernel.indices,
            kernel.data,
            kernel.p_indptr,
            kernel.p_idx,
            kernel.p_coeff,
            kernel.p_w,
            pv,
            betas,
            var_pick,
            acc_u,
            exch_u,
            config.sweeps_per_exchange,
            cold_out,
            energy_out,
        )
        for s_off in range(s_chunk):
            sweep += 1
            if collect_energy_traces and sweep > burn_in:
                for pos in range(n_r):
                    traces[pos].append(energy_out[s_off, pos])
            if (
                harvest is not None
                and sweep > burn_in
                and sweep % config.decorrelation_stride == 0
            ):
                harvest(sweep, cold_out[s_off])
        if sweep >= next_resync:
            exact = model.evaluate_batch(states)
            max_drift = max(max_drift, float(np.abs(exact - energies).max()))
            energies = exact
            pv = kernel.form_values(states)
            next_resync += config.resync_interval

    exact = model.evaluate_batch(states)
    max_drift = max(max_drift, float(np.abs(exact - energies).max()))
    diag = {
        "max_drift": max_drift,
        "energy_traces": [np.array(t) for t in traces],
        "final_energies": exact,
    }
    return (states, perm), diag


def run(
    model: QuboModel,
    config: SamplerConfig,
    ladder: TemperatureLadder,
    classify,
    interval_id: int = 0,
) -> SampleArchive:
    """Sample validated ground states into an archive.

    ``classify(state)`` maps a candidate state to its bin value and must
    raise ``ValueError`` (or a subclass) for anything that is not a valid
    ground state of the restrained model; rejected harvest attempts are
    counted on the archive.
    """
    archive = SampleArchive(model_hash=model.content_hash())

    def harvest(sweep: int, state: np.ndarray) -> None:
        if abs(model.evaluate(state)) > 1e-9:
            archive.rejected += 1
            return
        try:
            bin_value = int(classify(state))
        except ValueError:
            archive.rejected += 1
            return
        archive.append(
            SampleRecord(
                interval_id=interval_id,
                bin_value=bin_value,
                state_hex=state_to_hex(state),
                sweep=sweep,
                seed=config.seed,
            )
        )

    _, diag = _run_chain(model, config, ladder, harvest=harvest)
    if diag["max_drift"] > 1e-9:
        warnings.warn(
            f"incremental energies drifted by {diag['max_drift']:.3e}",
            stacklevel=2,
        )
    if archive.rejected:
        warnings.warn(
            f"{archive.rejected} harvest attempts rejected (excited states)",
            stacklevel=2,
        )
    return archive


def estimate_autocorrelation(states: np.ndarray) -> float:
    """Integrated autocorrelation time of a harvested-state trajectory.

    ``states`` is (n_samples, n_vars) with 0/1 entries.  The per-site
    autocovariance of the +-1 spins is averaged over sites, and the
    normalized lag series is summed up to its first nonpositive entry.
    Returned in units of the harvest stride.
    """
    s = np.asarray(states, dtype=float)
    if s.ndim != 2 or len(s) < 100:
        raise ValueError("need at least 100 harvested states")
    m = 2.0 * s - 1.0
    m -= m.mean(axis=0)
    n_samp = len(m)
    var = np.mean(m * m)
    if var == 0.0:
        return 0.0
    tau = 0.0
    for lag in range(1, n_samp // 2):
        c = np.mean(m[:-lag] * m[lag:]) / var
        if c <= 0.0:
            break
        tau += c
    return float(tau)
