"""Canonical reweighting: exact oracles, limits, invariances."""

import numpy as np
import pytest

from qubodos.enumeration import enumerate_ising, enumerate_melt
from qubodos.ising import physical_energy
from qubodos.reweight import (
    CanonicalCurve,
    ConditionalAverage,
    canonical_curve,
    canonical_expectation,
    conditional_average,
)
from qubodos.ringmelt import CuboidLattice


@pytest.fixture(scope="module")
def ising4_dos():
    dos, _ = enumerate_ising(4)
    return dos.to_dos()


def _energy_cond(dos):
    bins = dos.bins
    return ConditionalAverage(
        bins=bins,
        means=np.array([physical_energy(int(b), 4) for b in bins], dtype=float),
        counts=np.ones(len(bins), dtype=int),
    )


def _exact_canonical_energy(beta):
    """Direct canonical sum over all 2^16 states."""
    dos, _ = enumerate_ising(4)
    es = np.array([physical_energy(b, 4) for b in dos.counts])
    ns = np.array([dos.counts[b] for b in dos.counts], dtype=float)
    w = ns * np.exp(-beta * es)
    return float(np.sum(w * es) / np.sum(w))


class TestCanonicalExpectation:
    @pytest.mark.parametrize("beta", [0.0, 0.2, 0.5, 1.0])
    def test_matches_direct_canonical_sum(self, ising4_dos, beta):
        cond = _energy_cond(ising4_dos)
        got = canonical_expectation(
            ising4_dos,
            cond,
            beta,
            energy_of_bin=lambda b: physical_energy(int(b), 4),
        )
        assert got == pytest.approx(_exact_canonical_energy(beta), abs=1e-10)

    def test_beta_zero_is_plain_average(self, ising4_dos):
        cond = _energy_cond(ising4_dos)
        got = canonical_expectation(ising4_dos, cond, 0.0, energy_of_bin=lambda b: 0.0)
        w = ising4_dos.w()
        expect = float(np.sum(w * cond.means) / np.sum(w))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_large_beta_selects_ground_state(self, ising4_dos):
        cond = _energy_cond(ising4_dos)
        got = canonical_expectation(
            ising4_dos,
            cond,
            beta=30.0,
            energy_of_bin=lambda b: physical_energy(int(b), 4),
        )
        assert got == pytest.approx(-32.0, abs=1e-6)

    def test_constant_observable_is_constant(self, ising4_dos):
        bins = ising4_dos.bins
        cond = ConditionalAverage(bins, np.full(len(bins), 3.25), np.ones(len(bins), int))
        for beta in (-2.0, 0.0, 1.5):
            got = canonical_expectation(ising4_dos, cond, beta)
            assert got == pytest.approx(3.25, rel=1e-12)

    def test_dos_rescaling_invariance(self, ising4_dos):
        from qubodos.histogram import DensityOfStates

        cond = _energy_cond(ising4_dos)
        scaled = DensityOfStates(
            bins=ising4_dos.bins, log_w=ising4_dos.log_w + 7.0
        )
        a = canonical_expectation(ising4_dos, cond, 0.4)
        b = canonical_expectation(scaled, cond, 0.4)
        assert a == pytest.approx(b, rel=1e-12)

    def test_missing_bin_named(self, ising4_dos):
        cond = ConditionalAverage(
            bins=ising4_dos.bins[:-1],
            means=np.zeros(len(ising4_dos.bins) - 1),
            counts=np.ones(len(ising4_dos.bins) - 1, int),
        )
        with pytest.raises(ValueError, match="16"):
            canonical_expectation(ising4_dos, cond, 0.1)

    def test_nonfinite_beta_rejected(self, ising4_dos):
        cond = _energy_cond(ising4_dos)
        with pytest.raises(ValueError):
            canonical_expectation(ising4_dos, cond, np.inf)


class TestMeltOracle:
    def test_n_rings_curve_matches_enumeration(self):
        dos, configs = enumerate_melt(CuboidLattice((3, 3, 2)))
        bin_vals = [c.n_c for c in configs]
        n_rings = [c.n_rings for c in configs]
        cond = conditional_average(bin_vals, n_rings)
        betas = np.arange(-8.0, 8.01, 0.5)
        curve = canonical_curve(dos.to_dos(), cond, betas)
        nc = np.array(bin_vals, dtype=float)
        nr = np.array(n_rings, dtype=float)
        for beta, got in zip(betas, curve.means):
            w = np.exp(-beta * nc)
            expect = float(np.sum(w * nr) / np.sum(w))
            assert got == pytest.approx(expect, abs=1e-10)


class TestConditionalAverage:
    def test_pooling(self):
        cond = conditional_average([1, 1, 2, 2, 2], [1.0, 3.0, 5.0, 5.0, 2.0])
        assert cond.lookup() == {1: 2.0, 2: 4.0}
        assert cond.counts.tolist() == [2, 3]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            conditional_average([1, 2], [1.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            conditional_average([], [])


class TestCurve:
    def test_non_increasing_betas_rejected(self):
        with pytest.raises(ValueError):
            CanonicalCurve(betas=np.array([0.0, 0.0]), means=np.zeros(2))

    def test_text_roundtrip(self, ising4_dos):
        cond = _energy_cond(ising4_dos)
        curve = canonical_curve(ising4_dos, cond, [0.0, 0.5, 1.0])
        restored = CanonicalCurve.from_text(curve.to_text())
        np.testing.assert_allclose(restored.betas, curve.betas)
        np.testing.assert_allclose(restored.means, curve.means, rtol=1e-15)

    def test_block_sems_zero_for_identical_blocks(self, ising4_dos):
        cond = _energy_cond(ising4_dos)
        curve = canonical_curve(
            ising4_dos, cond, [0.0, 0.5], block_dos_list=[ising4_dos] * 4
        )
        np.testing.assert_allclose(curve.sems, 0.0, atol=1e-15)
