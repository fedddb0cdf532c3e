"""QUBO encoding of the L x L periodic Ising system.

Site variables sigma mirror the physical spins; per-edge variables eta
track parallel/antiparallel neighbor pairs (tied to the sigmas by an XNOR
constraint built from ancilla variables theta); power-of-two slack
variables restrain the parallel-pair count to an interval.

The edge-sector terms are constructed so that, for every sigma assignment,
the minimizing (eta, theta) completion gives that sector energy exactly
zero, with eta_ij = 1 iff sigma_i == sigma_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qubo import LinearForm, QuboModel

__all__ = [
    "IsingLayout",
    "ParallelInterval",
    "CorruptStateError",
    "build_ising",
    "decode_ising",
    "validate_ground_state",
    "physical_energy",
]


class CorruptStateError(ValueError):
    """Decoded state violates the encoding's consistency constraints."""


@dataclass
class ParallelInterval:
    """Restrains the parallel-pair count to [n_bar, n_bar + 2**m - 1].

    The upper end may overhang the admissible range [0, L^2]; states
    simply never realize the overhanging slack values.
    """

    n_bar: int
    m: int = 0

    def __post_init__(self):
        if self.n_bar < 0:
            raise ValueError("n_bar must be non-negative")
        if self.m < 0:
            raise ValueError("slack count must be non-negative")

    @property
    def lo(self) -> int:
        return self.n_bar

    @property
    def hi(self) -> int:
        return self.n_bar + 2**self.m - 1

    def contains(self, n_par: int) -> bool:
        return self.lo <= n_par <= self.hi


@dataclass
class IsingLayout:
    """Variable index ranges for the encoded L x L system.

    Order: sigma (L^2), eta (2 L^2), theta (2 L^2), slack (m).  Edges are
    enumerated row-major, right edge then down edge per site, including
    the periodic wrap edges.
    """

    L: int
    m: int
    edges: list[tuple[int, int]] = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @property
    def n_edges(self) -> int:
        return 2 * self.L * self.L

    @property
    def num_vars(self) -> int:
        return self.n_sites + 2 * self.n_edges + self.m

    def sigma(self, site: int) -> int:
        return site

    def eta(self, edge: int) -> int:
        return self.n_sites + edge

    def theta(self, edge: int) -> int:
        return self.n_sites + self.n_edges + edge

    def slack(self, k: int) -> int:
        return self.n_sites + 2 * self.n_edges + k

    def header_lines(self) -> list[str]:
        return [f"layout ising {self.L} {self.m}"]


def _edge_list(L: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(L):
        for c in range(L):
            i = r * L + c
            edges.append((i, r * L + (c + 1) % L))
            edges.append((i, ((r + 1) % L) * L + c))
    return edges


def build_ising(
    L: int, interval: ParallelInterval, A: float = 1.0
) -> tuple[QuboModel, IsingLayout]:
    """Build the interval-restrained Ising QUBO model.

    Ground states have energy exactly 0: the edge sector vanishes on
    XNOR-consistent completions and the slack sector vanishes when the
    parallel-pair count lies in the interval.
    """
    if L % 2 != 0 or L < 2:
        raise ValueError("L must be even and >= 2")
    if A <= 0:
        raise ValueError("A must be positive")
    if interval.n_bar > L * L:
        raise ValueError("interval lower bound exceeds the admissible range")
    layout = IsingLayout(L=L, m=interval.m, edges=_edge_list(L))
    model = QuboModel(layout.num_vars)

    for e, (i, j) in enumerate(layout.edges):
        si, sj = layout.sigma(i), layout.sigma(j)
        eta, th = layout.eta(e), layout.theta(e)
        model.add_offset(1.0)
        model.add_quadratic(si, sj, 2.0)
        model.add_quadratic(si, eta, 2.0)
        model.add_quadratic(sj, eta, 2.0)
        model.add_quadratic(si, th, -4.0)
        model.add_quadratic(sj, th, -4.0)
        model.add_quadratic(eta, th, -4.0)
        model.add_linear(si, -1.0)
        model.add_linear(sj, -1.0)
        model.add_linear(eta, -1.0)
        model.add_linear(th, 8.0)

    # (sum eta - 2 n_bar - 2 sum 2^k s_k)^2 restrains sum eta = 2 n_par
    coeffs = {layout.eta(e): 1 for e in range(layout.n_edges)}
    for k in range(interval.m):
        coeffs[layout.slack(k)] = -(2 ** (k + 1))
    model.add_penalty_form(LinearForm(coeffs, constant=-2 * interval.n_bar), A)
    return model, layout


def decode_ising(state, layout: IsingLayout) -> tuple[np.ndarray, int]:
    """Extract the spin grid and the parallel-pair count from a ground state."""
    s = np.asarray(state)
    grid = s[: layout.n_sites].reshape(layout.L, layout.L).copy()
    eta_sum = 0
    for e, (i, j) in enumerate(layout.edges):
        eta = int(s[layout.eta(e)])
        if eta != int(s[i] == s[j]):
            raise CorruptStateError(f"XNOR violation on edge {e} (sites {i}, {j})")
        eta_sum += eta
    if eta_sum % 2 != 0:
        raise CorruptStateError("odd parallel-edge total")
    return grid, eta_sum // 2


def validate_ground_state(
    state, model: QuboModel, layout: IsingLayout, interval: ParallelInterval
) -> tuple[bool, str]:
    """Check XNOR consistency, interval membership and energy."""
    try:
        _, n_par = decode_ising(state, layout)
    except CorruptStateError as exc:
        return False, f"XNOR violation: {exc}"
    if not interval.contains(n_par):
        return False, f"n_par {n_par} outside interval [{interval.lo}, {interval.hi}]"
    energy = model.evaluate(state)
    if abs(energy) > 1e-9:
        return False, f"nonzero energy {energy}"
    return True, "ok"


def physical_energy(n_par: int, L: int) -> int:
    """Nearest-neighbour Ising energy (J = 1) from the parallel-pair count."""
    return 2 * L * L - 4 * n_par
