"""Run-configuration handling and the encode-to-report pipeline.

A run is driven by a flat INI file (or a named preset).  Stages write
their artifacts into the output directory and are skipped on re-runs
when their inputs are unchanged and their outputs still exist; all
randomness derives from the single config seed through a fixed
(stage, interval) tree.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import histogram as hg
from . import ising, ringmelt, sampler, topology
from .qubo import state_from_hex
from .reweight import canonical_curve, conditional_average

__all__ = [
    "RunConfig",
    "PlanError",
    "plan_intervals",
    "run_pipeline",
    "preset",
    "PRESETS",
]


class PlanError(ValueError):
    pass


@dataclass
class RunConfig:
    system: str = "ising"
    l: int = 4
    dims: tuple[int, int, int] = (3, 3, 2)
    # interval plan
    start: int = 0
    stride: int = 1
    m: int = 2
    count: int = 14
    bin_min: int = 0
    bin_max: int = 16
    # sampling
    depth: int = 1000
    total_sweeps: int = 0  # 0 = auto from depth and stride
    decorrelation_stride: int = 20
    sweeps_per_exchange: int = 1
    burn_in_fraction: float = 0.1
    t_max_factor: float = 10**2.5
    t_min_factor: float = 1e-3
    # solver
    mix: float = 0.1
    n_cycles: int = 100
    epsilon: float = 1e-15
    n_iter: int = 50_000
    blocks: int = 4
    # reweighting
    beta_min: float = -8.0
    beta_max: float = 8.0
    beta_step: float = 0.5
    observables: tuple[str, ...] = ()
    # run
    seed: int = 1
    out: str = "run"
    workers: int = 1

    def __post_init__(self):
        if self.system not in ("ising", "melt"):
            raise ValueError("system must be 'ising' or 'melt'")
        if self.count < 1 or self.depth < 1 or self.blocks < 2:
            raise ValueError("count, depth must be >= 1 and blocks >= 2")
        if self.stride < 1 or self.m < 0:
            raise ValueError("stride must be >= 1 and m >= 0")
        if not self.observables:
            self.observables = (
                ("energy",) if self.system == "ising" else ("n_rings", "p_link", "p_knot")
            )

    @classmethod
    def from_ini(cls, path: str | Path) -> "RunConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        kwargs = {}
        casts = {f.name: f.type for f in fields(cls)}
        for section in parser.sections():
            for key, value in parser.items(section):
                if key not in casts:
                    raise ValueError(f"unknown config key '{key}'")
                kwargs[key] = _cast(key, value)
        return cls(**kwargs)

    def content_key(self) -> str:
        items = {f.name: getattr(self, f.name) for f in fields(self)}
        items.pop("out")
        items.pop("workers")
        return json.dumps(items, sort_keys=True, default=str)


def _cast(key: str, value: str):
    if key == "dims":
        parts = tuple(int(p) for p in value.replace(",", " ").split())
        if len(parts) != 3:
            raise ValueError("dims needs three integers")
        return parts
    if key == "observables":
        return tuple(p.strip() for p in value.replace(",", " ").split())
    if key in ("system", "out"):
        return value.strip()
    if key in (
        "burn_in_fraction",
        "mix",
        "epsilon",
        "beta_min",
        "beta_max",
        "beta_step",
        "t_max_factor",
        "t_min_factor",
    ):
        return float(value)
    return int(value)


PRESETS: dict[str, dict] = {
    # L = 4 validation against exhaustive enumeration
    "ising-validation": dict(
        system="ising",
        l=4,
        start=0,
        stride=1,
        m=2,
        count=14,
        bin_min=0,
        bin_max=16,
        depth=1000,
        # the restrained-count sequence decorrelates over ~200-270
        # sweeps; harvesting every 600 leaves ~10% residual correlation
        decorrelation_stride=600,
        # the relative-change stopping delta cannot reach 1e-15 with 14
        # intervals (float noise floor ~2e-15); stop at the floor
        # instead of burning the full per-cycle iteration budget
        epsilon=1e-13,
        beta_min=-1.0,
        beta_max=1.0,
        beta_step=0.1,
        out="ising-validation",
    ),
    # box-plot protocol on the fully enumerable melt
    "melt-3x3x2": dict(
        system="melt",
        dims=(3, 3, 2),
        start=10,
        stride=2,
        m=2,
        count=4,
        bin_min=12,
        bin_max=18,
        depth=50,
        # the corner-count sequence decorrelates over ~1-2k sweeps
        # (replica round trips); harvest well beyond that so the 50
        # samples per interval are effectively independent
        decorrelation_stride=8000,
        out="melt-3x3x2",
    ),
    # numerical-robustness smoke test, no accuracy claim
    "melt-5x5x4-smoke": dict(
        system="melt",
        dims=(5, 5, 4),
        start=74,
        stride=4,
        m=3,
        count=3,
        bin_min=76,
        bin_max=84,
        depth=10,
        # ordering the 974-variable model needs a cold end near T ~ 0.1
        # (the default t_min_factor leaves the coldest replica too warm
        # to reach the ground-state manifold) and roughly 1e5 sweeps
        # before the first ground state appears; afterwards the cold
        # replica stays on the manifold most sweeps
        t_min_factor=2e-4,
        total_sweeps=200_000,
        decorrelation_stride=50,
        out="melt-5x5x4-smoke",
    ),
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset '{name}' (have {sorted(PRESETS)})")
    return RunConfig(**{**PRESETS[name], **overrides})


# -- interval planning -----------------------------------------------------


def plan_intervals(config: RunConfig) -> list[tuple[int, int, int]]:
    """Staggered intervals (id, bin_min, bin_max) of width 2^m.

    Validates gapless coverage of [config.bin_min, config.bin_max] and
    warns about single-bin gaps that m = 1 Ising intervals cannot bridge.
    """
    width = 2**config.m
    plan = []
    for i in range(config.count):
        lo = config.start + i * config.stride
        plan.append((i, lo, lo + width - 1))
    for (_, lo1, hi1), (_, lo2, _) in zip(plan, plan[1:]):
        if lo2 > hi1 + 1:
            raise PlanError(f"coverage gap at bins {hi1 + 1}..{lo2 - 1}")
    if plan[0][1] > config.bin_min or plan[-1][2] < config.bin_max:
        raise PlanError(
            f"plan covers [{plan[0][1]}, {plan[-1][2]}] but "
            f"[{config.bin_min}, {config.bin_max}] was requested"
        )
    if config.system == "ising" and config.m == 1:
        # n_par = 1 and L^2 - 1 are unrealizable; width-2 intervals
        # cannot bridge across them
        n = config.l * config.l
        warnings.warn(
            f"m=1 intervals cannot bridge the unrealizable bins 1 and {n - 1}; "
            "the reconstruction splits into disconnected components",
            stacklevel=2,
        )
    return plan


# -- system adapters -------------------------------------------------------


class _IsingSystem:
    def __init__(self, config: RunConfig):
        self.L = config.l
        self.lattice = None

    def build(self, lo: int, hi: int):
        m = (hi - lo + 1 - 1).bit_length()
        interval = ising.ParallelInterval(lo, m)
        model, layout = ising.build_ising(self.L, interval)
        return model, layout, interval

    def slack_set(self, layout) -> frozenset[int]:
        return frozenset(layout.slack(k) for k in range(layout.m))

    def classifier(self, model, layout, interval):
        def classify(state):
            ok, reason = ising.validate_ground_state(state, model, layout, interval)
            if not ok:
                raise ValueError(reason)
            return ising.decode_ising(state, layout)[1]

        return classify

    def header(self, layout):
        return layout.header_lines()

    def observable(self, name: str):
        if name != "energy":
            raise ValueError(f"unknown ising observable '{name}'")
        L = self.L

        def evaluate(state, layout):
            _, n_par = ising.decode_ising(state, layout)
            return float(ising.physical_energy(n_par, L))

        return evaluate

    def energy_of_bin(self):
        L = self.L
        return lambda b: float(ising.physical_energy(int(b), L))


class _MeltSystem:
    def __init__(self, config: RunConfig):
        self.lattice = ringmelt.CuboidLattice(config.dims)

    def build(self, lo: int, hi: int):
        m = (hi - lo + 1 - 1).bit_length()
        interval = ringmelt.CurvatureInterval(lo, m)
        model, layout = ringmelt.build_melt(self.lattice, interval)
        return model, layout, interval

    def slack_set(self, layout) -> frozenset[int]:
        return frozenset(layout.slack(k) for k in range(layout.m))

    def classifier(self, model, layout, interval):
        def classify(state):
            ok, reason = ringmelt.validate_melt_ground_state(
                state, model, layout, self.lattice, interval
            )
            if not ok:
                raise ValueError(reason)
            return ringmelt.decode_melt(state, layout, self.lattice).n_c

        return classify

    def header(self, layout):
        return layout.header_lines()

    def observable(self, name: str):
        lattice = self.lattice

        def evaluate(state, layout):
            config = ringmelt.decode_melt(state, layout, lattice)
            if name == "n_rings":
                return float(config.n_rings)
            report = topology.analyze(config, lattice)
            if name == "p_link":
                return float(report.is_linked)
            if name == "p_knot":
                return float(report.is_knotted)
            raise ValueError(f"unknown melt observable '{name}'")

        return evaluate

    def energy_of_bin(self):
        return None  # bin n_c is itself conjugate to beta*kappa_b


def _system(config: RunConfig):
    return _IsingSystem(config) if config.system == "ising" else _MeltSystem(config)


# -- stage plumbing --------------------------------------------------------


def _hash_text(*parts: str) -> str:
    acc = hashlib.sha256()
    for p in parts:
        acc.update(p.encode())
        acc.update(b"\x00")
    return acc.hexdigest()[:16]


class _StageState:
    def __init__(self, out: Path):
        self.path = out / "stages.json"
        self.data = {}
        if self.path.exists():
            self.data = json.loads(self.path.read_text())

    def fresh(self, stage: str, input_hash: str, outputs: list[Path]) -> bool:
        return self.data.get(stage) == input_hash and all(
            p.exists() for p in outputs
        )

    def record(self, stage: str, input_hash: str) -> None:
        self.data[stage] = input_hash
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))


def _interval_seed(config: RunConfig, stage: int, interval_id: int) -> int:
    ss = np.random.SeedSequence([config.seed, stage, interval_id])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def _sample_interval(config, system, interval_id, lo, hi):
    model, layout, interval = system.build(lo, hi)
    seed = _interval_seed(config, 1, interval_id)
    ladder = sampler.calibrate_ladder(
        model,
        seed,
        slack_var_set=system.slack_set(layout),
        t_max_factor=config.t_max_factor,
        t_min_factor=config.t_min_factor,
    )
    stride = config.decorrelation_stride
    total = config.total_sweeps or int(
        config.depth * stride / (1 - config.burn_in_fraction) * 1.2
    )
    archive = sampler.SampleArchive(model_hash=model.content_hash())
    classify = system.classifier(model, layout, interval)
    attempt = 0
    while len(archive.records) < config.depth and attempt < 8:
        cfg = sampler.SamplerConfig(
            total_sweeps=total,
            seed=seed + attempt,
            decorrelation_stride=stride,
            sweeps_per_exchange=config.sweeps_per_exchange,
            burn_in_fraction=config.burn_in_fraction,
            slack_var_set=system.slack_set(layout),
        )
        part = sampler.run(
            model, cfg, ladder, classify, interval_id=interval_id
        )
        archive.extend(part)
        attempt += 1
        total *= 2
    if len(archive.records) < config.depth:
        raise RuntimeError(
            f"interval {interval_id}: only {len(archive.records)} of "
            f"{config.depth} states harvested"
        )
    archive.records = archive.records[: config.depth]
    return model, layout, interval, archive


def run_pipeline(
    config: RunConfig, dry_run: bool = False, until: str | None = None
) -> dict:
    """Execute the stages up to ``until`` (all of them by default).

    Returns a summary dict with the plan, the stages that actually ran,
    and (when reached) the reconstructed density of states.
    """
    stage_order = ("plan", "sample", "histogram", "reconstruct", "reweight", "analyze")
    if until is not None and until not in stage_order:
        raise ValueError(f"unknown stage '{until}'")

    def done(stage: str) -> bool:
        return until is not None and stage_order.index(until) <= stage_order.index(stage)

    plan = plan_intervals(config)
    if dry_run:
        return {"plan": plan, "executed": False}

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    state = _StageState(out)
    system = _system(config)
    key = config.content_key()
    summary: dict = {"plan": plan, "executed": True, "stages_run": []}

    # plan stage
    plan_text = "".join(f"{i} {lo} {hi}\n" for i, lo, hi in plan)
    plan_hash = _hash_text(key, "plan")
    plan_path = out / "plan.txt"
    if not state.fresh("plan", plan_hash, [plan_path]):
        plan_path.write_text(plan_text)
        state.record("plan", plan_hash)
        summary["stages_run"].append("plan")
    if done("plan"):
        return summary

    # encode + sample per interval (archives are the combined artifact)
    sample_hash = _hash_text(key, "sample", plan_text)
    archive_paths = [out / f"archive_{i}.txt" for i, _, _ in plan]
    model_paths = [out / f"model_{i}.txt" for i, _, _ in plan]
    layouts = {}
    models = {}
    intervals = {}
    if not state.fresh("sample", sample_hash, archive_paths + model_paths):
        def work(entry):
            interval_id, lo, hi = entry
            return _sample_interval(config, system, interval_id, lo, hi)

        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(work, plan))
        else:
            results = [work(entry) for entry in plan]
        for (interval_id, _, _), (model, layout, interval, archive) in zip(
            plan, results
        ):
            models[interval_id] = model
            layouts[interval_id] = layout
            intervals[interval_id] = interval
            (out / f"model_{interval_id}.txt").write_text(
                model.to_text(extra_header=system.header(layout))
            )
            (out / f"archive_{interval_id}.txt").write_text(archive.to_text())
        state.record("sample", sample_hash)
        summary["stages_run"].append("sample")
    else:
        for interval_id, lo, hi in plan:
            model, layout, interval = system.build(lo, hi)
            models[interval_id] = model
            layouts[interval_id] = layout
            intervals[interval_id] = interval

    archives = {
        i: sampler.SampleArchive.from_text((out / f"archive_{i}.txt").read_text())
        for i, _, _ in plan
    }
    for interval_id, _, _ in plan:
        if archives[interval_id].model_hash != models[interval_id].content_hash():
            raise RuntimeError(
                f"archive_{interval_id}.txt does not match the configured model"
            )
    if done("sample"):
        return summary

    # histogram stage
    archive_texts = [archives[i].to_text() for i, _, _ in plan]
    hist_hash = _hash_text(key, "hist", *archive_texts)
    hist_path = out / "histograms.txt"
    if not state.fresh("histogram", hist_hash, [hist_path]):
        hists = []
        for interval_id, lo, hi in plan:
            arch = archives[interval_id]
            num_vars = models[interval_id].num_vars
            g = 1.0
            states = arch.states(num_vars)
            if len(states) >= 100:
                tau = sampler.estimate_autocorrelation(states)
                if config.decorrelation_stride < 3 * tau:
                    g = 1.0 + 2.0 * tau
            hists.append(
                hg.IntervalHistogram.from_samples(
                    interval_id, lo, hi, arch.bin_values(), g=g
                )
            )
        hist_path.write_text(hg.HistogramSet(hists).to_text())
        state.record("histogram", hist_hash)
        summary["stages_run"].append("histogram")

    if done("histogram"):
        return summary

    hset = hg.HistogramSet.from_text(hist_path.read_text())

    # reconstruct stage
    params = hg.SolverParams(
        mix=config.mix,
        n_cycles=config.n_cycles,
        epsilon=config.epsilon,
        n_iter=config.n_iter,
    )
    rec_hash = _hash_text(key, "rec", hist_path.read_text())
    dos_path = out / "dos.txt"
    block_paths = [out / f"dos_block_{k}.txt" for k in range(config.blocks)]
    if not state.fresh("reconstruct", rec_hash, [dos_path] + block_paths):
        approx = hg.reconstruct_approx(hset, params)
        full = hg.reconstruct_full(hset, approx, params)
        per_interval = {
            i: ((lo, hi), archives[i].bin_values()) for i, lo, hi in plan
        }
        mean_dos, _ = hg.block_reconstruct(per_interval, config.blocks, params)
        sem = np.zeros(len(full.bins))
        block_sem = (
            mean_dos.sem if mean_dos.sem is not None else np.zeros(len(mean_dos.bins))
        )
        mean_lookup = dict(zip(mean_dos.bins.tolist(), block_sem))
        for idx, b in enumerate(full.bins):
            sem[idx] = mean_lookup.get(int(b), 0.0)
        full.sem = sem
        dos_path.write_text(full.to_text())
        for k, bp in enumerate(block_paths):
            bdos = _block_dos(per_interval, config.blocks, k, params)
            bp.write_text(bdos.to_text())
        state.record("reconstruct", rec_hash)
        summary["stages_run"].append("reconstruct")

    dos = hg.DensityOfStates.from_text(dos_path.read_text())
    block_dos = [
        hg.DensityOfStates.from_text(bp.read_text()) for bp in block_paths
    ]
    summary["dos"] = dos
    summary["block_dos"] = block_dos
    if done("reconstruct"):
        return summary

    # reweight stage
    betas = np.arange(
        config.beta_min, config.beta_max + config.beta_step / 2, config.beta_step
    )
    rw_hash = _hash_text(key, "rw", dos_path.read_text())
    curve_paths = {name: out / f"curve_{name}.txt" for name in config.observables}
    if not state.fresh("reweight", rw_hash, list(curve_paths.values())):
        for name in config.observables:
            evaluate = system.observable(name)
            bins, values = [], []
            for interval_id, _, _ in plan:
                layout = layouts[interval_id]
                arch = archives[interval_id]
                for rec in arch.records:
                    s = state_from_hex(rec.state_hex, models[interval_id].num_vars)
                    bins.append(rec.bin_value)
                    values.append(evaluate(s, layout))
            cond = conditional_average(bins, values)
            curve = canonical_curve(
                dos, cond, betas, block_dos, energy_of_bin=system.energy_of_bin()
            )
            curve_paths[name].write_text(curve.to_text())
        state.record("reweight", rw_hash)
        summary["stages_run"].append("reweight")
    if done("reweight"):
        return summary

    # topology stage (melt only)
    if config.system == "melt":
        topo_hash = _hash_text(key, "topo", *archive_texts)
        topo_path = out / "topology.txt"
        if not state.fresh("analyze", topo_hash, [topo_path]):
            lines = ["# state_id\tn_c\tn_rings\tlinked\tknotted\tmax_abs_lk"]
            state_id = 0
            for interval_id, _, _ in plan:
                layout = layouts[interval_id]
                for rec in archives[interval_id].records:
                    s = state_from_hex(rec.state_hex, models[interval_id].num_vars)
                    ring_config = ringmelt.decode_melt(s, layout, system.lattice)
                    report = topology.analyze(ring_config, system.lattice)
                    lines.append(
                        f"{state_id}\t{ring_config.n_c}\t{report.n_rings}"
                        f"\t{int(report.is_linked)}\t{int(report.is_knotted)}"
                        f"\t{report.max_abs_linking}"
                    )
                    state_id += 1
            topo_path.write_text("\n".join(lines) + "\n")
            state.record("analyze", topo_hash)
            summary["stages_run"].append("analyze")

    # report stage
    report_path = out / "report.txt"
    lines = [
        f"system {config.system}",
        f"intervals {len(plan)}",
        f"depth {config.depth}",
        f"observed bins {' '.join(str(int(b)) for b in dos.bins[dos.log_w > -np.inf])}",
    ]
    total_w = float(np.sum(np.exp(dos.log_w[dos.log_w > -np.inf])))
    lines.append(f"normalization {total_w:.12f}")
    report_path.write_text("\n".join(lines) + "\n")
    summary["dos"] = dos
    summary["block_dos"] = block_dos
    summary["archives"] = archives
    return summary


def _block_dos(per_interval, s, k, params):
    """Reconstruction from block k alone (for curve SEMs)."""
    hists = []
    for iid, ((lo, hi), vals) in sorted(per_interval.items()):
        per = len(vals) // s
        chunk = vals[k * per : (k + 1) * per]
        hists.append(hg.IntervalHistogram.from_samples(iid, lo, hi, chunk, g=1.0))
    hset = hg.HistogramSet(hists)
    return hg.reconstruct_full(hset, hg.reconstruct_approx(hset, params), params)
