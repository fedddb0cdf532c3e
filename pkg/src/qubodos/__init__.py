"""Interval-restrained QUBO sampling and density-of-states reconstruction."""

from .histogram import (
    DensityOfStates,
    HistogramSet,
    IntervalHistogram,
    SolverParams,
    block_reconstruct,
    fixed_point_residual,
    reconstruct_approx,
    reconstruct_full,
)
from .ising import ParallelInterval, build_ising, decode_ising, physical_energy
from .pipeline import RunConfig, plan_intervals, preset, run_pipeline
from .qubo import LinearForm, QuboModel
from .reweight import (
    CanonicalCurve,
    ConditionalAverage,
    canonical_curve,
    canonical_expectation,
    conditional_average,
)
from .ringmelt import CuboidLattice, CurvatureInterval, RingConfiguration, build_melt
from .sampler import (
    SampleArchive,
    SamplerConfig,
    TemperatureLadder,
    calibrate_ladder,
    estimate_autocorrelation,
    run,
)
from .topology import EntanglementReport, analyze, gauss_linking, knot_determinant

__version__ = "0.1.0"
