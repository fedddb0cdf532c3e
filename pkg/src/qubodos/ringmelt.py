"""QUBO encoding of space-filling ring melts on a cuboid lattice.

Bond variables (one per lattice edge) mark the edges occupied by ring
bonds; corner variables (one per perpendicular incident-edge pair) track
the corner turns.  Three penalty sectors enforce bond count = site count,
no branching, and bond/corner consistency; a slack sector restrains the
total corner count to an interval.  Boundaries are open (non-periodic).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qubo import LinearForm, QuboModel

__all__ = [
    "CuboidLattice",
    "MeltLayout",
    "CurvatureInterval",
    "RingConfiguration",
    "CorruptMeltError",
    "build_melt",
    "decode_melt",
    "validate_melt_ground_state",
    "geometric_corner_count",
]


class CorruptMeltError(ValueError):
    """Decoded state violates the ring-melt constraints."""


class CuboidLattice:
    """Open-boundary cuboid lattice with its edge and corner-triplet sets.

    Site index = (z * Ly + y) * Lx + x.  Edges are undirected (i, j) with
    i < j, listed x-direction first, then y, then z.  A corner triplet
    (i, j, k) has center j adjacent to both i and k, the two incident
    edges meeting at a right angle, and k > i.
    """

    def __init__(self, dims: tuple[int, int, int]):
        lx, ly, lz = dims
        if min(lx, ly, lz) < 1:
            raise ValueError("all lattice dimensions must be >= 1")
        self.dims = (lx, ly, lz)
        self.n_sites = lx * ly * lz

        def idx(x, y, z):
            return (z * ly + y) * lx + x

        self.coords = [
            (x, y, z) for z in range(lz) for y in range(ly) for x in range(lx)
        ]
        self.edges: list[tuple[int, int]] = []
        for axis, (dx, dy, dz) in enumerate([(1, 0, 0), (0, 1, 0), (0, 0, 1)]):
            for z in range(lz):
                for y in range(ly):
                    for x in range(lx):
                        nx, ny, nz = x + dx, y + dy, z + dz
                        if nx < lx and ny < ly and nz < lz:
                            self.edges.append((idx(x, y, z), idx(nx, ny, nz)))
        self.edge_index = {e: n for n, e in enumerate(self.edges)}

        # incident edges per site
        self.incident: list[list[int]] = [[] for _ in range(self.n_sites)]
        for n, (i, j) in enumerate(self.edges):
            self.incident[i].append(n)
            self.incident[j].append(n)

        # perpendicular incident-edge pairs -> corner triplets
        self.corners: list[tuple[int, int, int]] = []
        self.corner_edges: list[tuple[int, int]] = []
        for j in range(self.n_sites):
            inc = self.incident[j]
            for a_pos in range(len(inc)):
                for b_pos in range(a_pos + 1, len(inc)):
                    ea, eb = inc[a_pos], inc[b_pos]
                    na = self._other_end(ea, j)
                    nb = self._other_end(eb, j)
                    if self._perpendicular(ea, eb):
                        i, k = min(na, nb), max(na, nb)
                        self.corners.append((i, j, k))
                        if na == i:
                            self.corner_edges.append((ea, eb))
                        else:
                            self.corner_edges.append((eb, ea))

    def _other_end(self, edge: int, site: int) -> int:
        i, j = self.edges[edge]
        return j if site == i else i

    def _direction(self, edge: int) -> tuple[int, int, int]:
        i, j = self.edges[edge]
        a, b = self.coords[i], self.coords[j]
        return (b[0] - a[0], b[1] - a[1], b[2] - a[2])

    def _perpendicular(self, ea: int, eb: int) -> bool:
        da, db = self._direction(ea), self._direction(eb)
        return sum(u * v for u, v in zip(da, db)) == 0

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_corners(self) -> int:
        return len(self.corners)


@dataclass
class CurvatureInterval:
    """Restrains the corner count to [n_bar_c, n_bar_c + 2**m - 1]."""

    n_bar_c: int
    m: int = 0

    def __post_init__(self):
        if self.n_bar_c < 0:
            raise ValueError("n_bar_c must be non-negative")
        if self.m < 0:
            raise ValueError("slack count must be non-negative")

    @property
    def lo(self) -> int:
        return self.n_bar_c

    @property
    def hi(self) -> int:
        return self.n_bar_c + 2**self.m - 1

    def contains(self, n_c: int) -> bool:
        return self.lo <= n_c <= self.hi


@dataclass
class MeltLayout:
    """Variable ranges: bonds (one per edge), corners, then slack."""

    dims: tuple[int, int, int]
    n_edges: int
    n_corners: int
    m: int

    @property
    def num_vars(self) -> int:
        return self.n_edges + self.n_corners + self.m

    def bond(self, edge: int) -> int:
        return edge

    def corner(self, c: int) -> int:
        return self.n_edges + c

    def slack(self, k: int) -> int:
        return self.n_edges + self.n_corners + k

    def header_lines(self) -> list[str]:
        lx, ly, lz = self.dims
        return [f"layout melt {lx} {ly} {lz} {self.m}"]


@dataclass
class RingConfiguration:
    """Decoded melt state: vertex-disjoint closed rings covering all sites."""

    dims: tuple[int, int, int]
    rings: list[list[int]]
    n_c: int

    @property
    def n_rings(self) -> int:
        return len(self.rings)

    def ring_coords(self, lattice: CuboidLattice | None = None):
        lat = lattice if lattice is not None else CuboidLattice(self.dims)
        return [[lat.coords[s] for s in ring] for ring in self.rings]

    def to_text(self) -> str:
        lx, ly, lz = self.dims
        lines = [f"rings {lx} {ly} {lz} {self.n_c} {self.n_rings}"]
        for ring in self.rings:
            lines.append(",".join(str(s) for s in ring))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RingConfiguration":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "rings":
            raise ValueError("not a ring configuration file")
        dims = (int(head[1]), int(head[2]), int(head[3]))
        n_c = int(head[4])
        rings = [[int(s) for s in ln.split(",")] for ln in lines[1:]]
        return cls(dims=dims, rings=rings, n_c=n_c)


def build_melt(
    lattice: CuboidLattice,
    interval: CurvatureInterval,
    A: float = 1.0,
    coeffs: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> tuple[QuboModel, MeltLayout]:
    """Build the interval-restrained ring-melt QUBO model.

    Ground states have energy exactly 0 and corner count inside the
    interval.
    """
    a_b, a_c, a_bc = coeffs
    if min(a_b, a_c, a_bc) <= 0 or A <= 0:
        raise ValueError("all penalty coefficients must be positive")
    layout = MeltLayout(
        dims=lattice.dims,
        n_edges=lattice.n_edges,
        n_corners=lattice.n_corners,
        m=interval.m,
    )
    model = QuboModel(layout.num_vars)

    # bond count == site count
    bond_form = LinearForm(
        {layout.bond(e): 1 for e in range(lattice.n_edges)},
        constant=-lattice.n_sites,
    )
    model.add_penalty_form(bond_form, a_b)

    # no branching: penalize pairs of distinct active corners at one center
    by_center: dict[int, list[int]] = {}
    for c, (_, j, _) in enumerate(lattice.corners):
        by_center.setdefault(j, []).append(c)
    for center_corners in by_center.values():
        for p in range(len(center_corners)):
            for q in range(p + 1, len(center_corners)):
                model.add_quadratic(
                    layout.corner(center_corners[p]),
                    layout.corner(center_corners[q]),
                    a_c,
                )

    # bond/corner consistency: corner active iff both incident bonds active
    for c, (e1, e2) in enumerate(lattice.corner_edges):
        cv = layout.corner(c)
        b1, b2 = layout.bond(e1), layout.bond(e2)
        model.add_linear(cv, 3 * a_bc)
        model.add_quadratic(b1, b2, a_bc)
        model.add_quadratic(cv, b1, -2 * a_bc)
        model.add_quadratic(cv, b2, -2 * a_bc)

    # corner-count interval restraint
    slack_form = LinearForm(
        {layout.corner(c): 1 for c in range(lattice.n_corners)}
        | {layout.slack(k): -(2**k) for k in range(interval.m)},
        constant=-interval.n_bar_c,
    )
    model.add_penalty_form(slack_form, A)
    return model, layout


def geometric_corner_count(lattice: CuboidLattice, active_edges: set[int]) -> int:
    """Number of perpendicular pairs of active edges, counted per site."""
    n_c = 0
    for e1, e2 in lattice.corner_edges:
        if e1 in active_edges and e2 in active_edges:
            n_c += 1
    return n_c


def decode_melt(
    state, layout: MeltLayout, lattice: CuboidLattice
) -> RingConfiguration:
    """Traverse the active bonds into disjoint rings.

    Raises ``CorruptMeltError`` for degree violations or bond/corner
    inconsistencies.
    """
    s = np.asarray(state)
    active = {e for e in range(lattice.n_edges) if s[layout.bond(e)]}
    degree = [0] * lattice.n_sites
    neighbors: dict[int, list[int]] = {i: [] for i in range(lattice.n_sites)}
    for e in active:
        i, j = lattice.edges[e]
        degree[i] += 1
        degree[j] += 1
        neighbors[i].append(j)
        neighbors[j].append(i)
    bad = [i for i in range(lattice.n_sites) if degree[i] != 2]
    if bad:
        raise CorruptMeltError(f"sites with degree != 2: {bad[:5]}")

    n_c_vars = int(sum(int(s[layout.corner(c)]) for c in range(lattice.n_corners)))
    for c, (e1, e2) in enumerate(lattice.corner_edges):
        expect = int(e1 in active and e2 in active)
        if int(s[layout.corner(c)]) != expect:
            raise CorruptMeltError(f"corner variable {c} inconsistent with bonds")
    n_c_geo = geometric_corner_count(lattice, active)
    if n_c_vars != n_c_geo:
        raise CorruptMeltError(
            f"corner total {n_c_vars} != geometric corner count {n_c_geo}"
        )

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
        if len(ring) < 4:
            raise CorruptMeltError(f"ring of length {len(ring)} at site {start}")
        rings.append(ring)
    return RingConfiguration(dims=lattice.dims, rings=rings, n_c=n_c_vars)


def validate_melt_ground_state(
    state,
    model: QuboModel,
    layout: MeltLayout,
    lattice: CuboidLattice,
    interval: CurvatureInterval,
) -> tuple[bool, str]:
    """Check ring structure, corner consistency, interval membership, energy."""
    try:
        config = decode_melt(state, layout, lattice)
    except CorruptMeltError as exc:
        return False, f"corner consistency / structure: {exc}"
    if not interval.contains(config.n_c):
        return False, (
            f"n_c {config.n_c} outside interval [{interval.lo}, {interval.hi}]"
        )
    energy = model.evaluate(state)
    if abs(energy) > 1e-9:
        return False, f"nonzero energy {energy}"
    return True, "ok"
