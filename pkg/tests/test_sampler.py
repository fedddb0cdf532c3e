"""Parallel-tempering sampler: calibration, determinism, correctness."""

import warnings

import numpy as np
import pytest

from qubodos.ising import ParallelInterval, build_ising, decode_ising
from qubodos.qubo import LinearForm, QuboModel
from qubodos.sampler import (
    SampleArchive,
    SampleRecord,
    SamplerConfig,
    TemperatureLadder,
    calibrate_ladder,
    estimate_autocorrelation,
    exchange_acceptance,
    run,
)


def _two_var_model():
    """Unique ground state (1, 0) with energy 0."""
    model = QuboModel(2)
    model.add_linear(0, -1.0)
    model.add_linear(1, 2.0)
    model.add_quadratic(0, 1, 3.0)
    model.add_offset(1.0)
    return model


class TestLadder:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            TemperatureLadder(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            TemperatureLadder(np.array([2.0, 2.0]))
        with pytest.raises(ValueError):
            TemperatureLadder(np.array([1.0, -0.5]))
        with pytest.raises(ValueError):
            TemperatureLadder(np.array([1.0]))

    def test_calibration_bounds(self):
        model = QuboModel(100)
        rng = np.random.default_rng(0)
        for i in range(100):
            model.add_linear(i, 1.0 if rng.random() < 0.5 else -1.0)
        ladder = calibrate_ladder(model, seed=1)
        # |h| = 1 fields: flip RMS is 1, so T_min <= 1e-3
        assert ladder.t_min <= 1e-3 + 1e-12
        assert ladder.t_max >= 100.0 * np.std(
            model.evaluate_batch(rng.integers(0, 2, size=(500, 100)).astype(np.int8))
        ) * 0.5
        assert ladder.n_replicas >= 20  # 2 sqrt(100), refinement only adds

    def test_calibration_refines_within_ten_rounds(self):
        model, layout = build_ising(4, ParallelInterval(6, 2))
        slack = frozenset(layout.slack(k) for k in range(layout.m))
        ladder = calibrate_ladder(model, seed=2, slack_var_set=slack)
        assert ladder.n_replicas >= 2
        assert np.all(np.diff(ladder.temps) < 0)


class TestExchange:
    def test_acceptance_formula(self):
        # colder replica (larger beta) holding the higher energy: always swap
        assert exchange_acceptance(0.1, 1.0, -3.0, 5.0) == 1.0
        a = exchange_acceptance(0.1, 1.0, 5.0, -3.0)
        assert a == pytest.approx(np.exp((1.0 - 0.1) * (-3.0 - 5.0)), rel=1e-12)

    def test_detailed_balance_symmetry(self):
        """p(a->b swap) / p(b->a swap) consistency: swapping the same pair
        twice multiplies to exp(0)."""
        fwd = exchange_acceptance(0.2, 2.0, 1.0, 4.0)
        back = exchange_acceptance(0.2, 2.0, 4.0, 1.0)
        assert fwd * back <= 1.0 + 1e-12
        assert min(fwd, back) < 1.0 <= max(fwd, back) + 1e-12


class TestRun:
    def test_unique_ground_state_found(self):
        model = _two_var_model()
        ladder = TemperatureLadder(np.geomspace(10.0, 0.01, 6))
        config = SamplerConfig(total_sweeps=500, seed=3, decorrelation_stride=5)

        def classify(state):
            if model.evaluate(state) != 0.0:
                raise ValueError("not a ground state")
            return int(state[0])

        archive = run(model, config, ladder, classify)
        assert len(archive.records) > 0
        assert all(r.bin_value == 1 for r in archive.records)
        assert archive.rejected == 0

    def test_determinism(self):
        model, layout = build_ising(2, ParallelInterval(0, 3))
        slack = frozenset(layout.slack(k) for k in range(layout.m))
        ladder = calibrate_ladder(model, seed=4, slack_var_set=slack)
        config = SamplerConfig(
            total_sweeps=400, seed=5, decorrelation_stride=5, slack_var_set=slack
        )

        def classify(state):
            _, n_par = decode_ising(state, layout)
            return n_par

        a = run(model, config, ladder, classify)
        b = run(model, config, ladder, classify)
        assert a.to_text() == b.to_text()

    def test_seed_changes_stream(self):
        model, layout = build_ising(2, ParallelInterval(0, 3))
        slack = frozenset(layout.slack(k) for k in range(layout.m))
        ladder = calibrate_ladder(model, seed=4, slack_var_set=slack)

        def classify(state):
            _, n_par = decode_ising(state, layout)
            return n_par

        outs = []
        for seed in (6, 7):
            config = SamplerConfig(
                total_sweeps=400, seed=seed, decorrelation_stride=5,
                slack_var_set=slack,
            )
            outs.append(run(model, config, ladder, classify).to_text())
        assert outs[0] != outs[1]

    def test_excited_states_rejected_with_warning(self):
        model = _two_var_model()
        # only hot temperatures: harvested states are mostly excited
        ladder = TemperatureLadder(np.array([100.0, 50.0]))
        config = SamplerConfig(total_sweeps=300, seed=8, decorrelation_stride=3)

        def classify(state):
            if model.evaluate(state) != 0.0:
                raise ValueError("not a ground state")
            return 0

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            archive = run(model, config, ladder, classify)
        assert archive.rejected > 0
        assert any("rejected" in str(w.message) for w in caught)


class TestArchive:
    def test_text_roundtrip(self):
        archive = SampleArchive("abc123")
        archive.append(SampleRecord(0, 3, "a1", 40, 7))
        archive.append(SampleRecord(1, 5, "ff", 80, 7))
        restored = SampleArchive.from_text(archive.to_text())
        assert restored.model_hash == "abc123"
        assert restored.records == archive.records

    def test_extend_requires_same_model(self):
        a = SampleArchive("aaa")
        b = SampleArchive("bbb")
        with pytest.raises(ValueError):
            a.extend(b)

    def test_bin_values_filtered_by_interval(self):
        archive = SampleArchive("h")
        archive.append(SampleRecord(0, 1, "00", 1, 1))
        archive.append(SampleRecord(1, 9, "00", 2, 1))
        assert archive.bin_values(0) == [1]
        assert archive.bin_values() == [1, 9]
        assert archive.interval_ids() == [0, 1]


class TestAutocorrelation:
    def test_iid_stream_near_zero(self):
        rng = np.random.default_rng(0)
        states = rng.integers(0, 2, size=(4000, 20))
        assert abs(estimate_autocorrelation(states)) < 0.1

    def test_duplicated_stream_near_half(self):
        rng = np.random.default_rng(1)
        base = rng.integers(0, 2, size=(2000, 20))
        dup = np.repeat(base, 2, axis=0)
        tau = estimate_autocorrelation(dup)
        assert tau == pytest.approx(0.5, abs=0.1)

    @pytest.mark.parametrize("p", [0.05, 0.1])
    def test_markov_chain_analytic(self, p):
        """Each site flips with probability p per step: integrated tau
        (1 - 2p) / (2p), within 20% of the exponential -1/ln(1-2p)."""
        rng = np.random.default_rng(2)
        n_steps, n_sites = 60000, 24
        flips = rng.random((n_steps, n_sites)) < p
        states = np.cumsum(flips, axis=0) % 2
        tau = estimate_autocorrelation(states)
        expect = (1 - 2 * p) / (2 * p)
        assert tau == pytest.approx(expect, rel=0.2)
        assert expect == pytest.approx(-1 / np.log(1 - 2 * p), rel=0.2)

    def test_short_input_rejected(self):
        with pytest.raises(ValueError):
            estimate_autocorrelation(np.zeros((10, 4)))

    def test_constant_stream_zero(self):
        assert estimate_autocorrelation(np.ones((200, 4))) == 0.0


class TestConfigValidation:
    def test_bad_values(self):
        with pytest.raises(ValueError):
            SamplerConfig(total_sweeps=0, seed=1)
        with pytest.raises(ValueError):
            SamplerConfig(total_sweeps=10, seed=1, decorrelation_stride=0)
        with pytest.raises(ValueError):
            SamplerConfig(total_sweeps=10, seed=1, burn_in_fraction=1.0)
