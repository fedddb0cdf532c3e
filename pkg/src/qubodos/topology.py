"""Topological observables for lattice ring configurations.

Two invariants are computed from integer lattice coordinates:

* the Gauss linking number of a ring pair, as the sum of signed solid
  angles over all segment pairs (each spherical quadrilateral split into
  two triangles evaluated with the atan2 triple-product formula);
* the knot determinant of a single ring, from the Fox coloring matrix of
  a sheared planar projection.  The shear slopes are exact rationals
  chosen so that for integer coordinates every crossing is a transversal
  interior crossing between an x-directed and a y-directed segment, with
  over/under decided by the (distinct, constant) z values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "EntanglementReport",
    "gauss_linking",
    "knot_determinant",
    "analyze_rings",
    "analyze",
]

# shear denominators: primes larger than any lattice extent in practice
_EPS_X = Fraction(1, 1009)
_EPS_Y = Fraction(1, 1013)


@dataclass
class EntanglementReport:
    """Per-ring knot determinants and pairwise linking numbers."""

    determinants: list[int]
    linking: dict[tuple[int, int], int]

    @property
    def n_rings(self) -> int:
        return len(self.determinants)

    @property
    def n_knotted(self) -> int:
        return sum(1 for d in self.determinants if d != 1)

    @property
    def n_linked_pairs(self) -> int:
        return sum(1 for lk in self.linking.values() if lk != 0)

    @property
    def is_knotted(self) -> bool:
        return self.n_knotted > 0

    @property
    def is_linked(self) -> bool:
        return self.n_linked_pairs > 0

    @property
    def max_abs_linking(self) -> int:
        return max((abs(lk) for lk in self.linking.values()), default=0)

    @property
    def is_entangled(self) -> bool:
        return self.is_knotted or self.is_linked


def _triangle_solid_angle(v1, v2, v3) -> float:
    """Signed solid angle of the spherical triangle spanned by v1, v2, v3."""
    n1, n2, n3 = np.linalg.norm(v1), np.linalg.norm(v2), np.linalg.norm(v3)
    numer = float(np.dot(v1, np.cross(v2, v3)))
    denom = float(
        n1 * n2 * n3
        + np.dot(v1, v2) * n3
        + np.dot(v2, v3) * n1
        + np.dot(v3, v1) * n2
    )
    return 2.0 * np.arctan2(numer, denom)


def gauss_linking(curve_a, curve_b) -> int:
    """Gauss linking number of two closed disjoint polygonal curves.

    Each curve is a sequence of 3D vertices, closed implicitly.  The
    double line integral reduces to a sum over segment pairs of the
    signed area of a spherical quadrilateral; the total is a multiple of
    4 pi and is returned as the integer link.
    """
    a = np.asarray(curve_a, dtype=float)
    b = np.asarray(curve_b, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3 or b.ndim != 2 or b.shape[1] != 3:
        raise ValueError("curves must be (n, 3) vertex arrays")
    total = 0.0
    na, nb = len(a), len(b)
    for i in range(na):
        ai, ai1 = a[i], a[(i + 1) % na]
        for j in range(nb):
            bj, bj1 = b[j], b[(j + 1) % nb]
            r11 = ai - bj
            r12 = ai - bj1
            r21 = ai1 - bj
            r22 = ai1 - bj1
            if (
                min(
                    np.dot(r11, r11),
                    np.dot(r12, r12),
                    np.dot(r21, r21),
                    np.dot(r22, r22),
                )
                == 0.0
            ):
                raise ValueError("curves touch; linking number undefined")
            total += _triangle_solid_angle(r11, r12, r22)
            total += _triangle_solid_angle(r11, r22, r21)
    link = total / (4.0 * np.pi)
    rounded = round(link)
    if abs(link - rounded) > 1e-6:
        raise ArithmeticError(f"linking sum {link} is not close to an integer")
    return int(rounded)


def _project(p) -> tuple[Fraction, Fraction]:
    x, y, z = (Fraction(int(c)) for c in p)
    return x - _EPS_X * z, y - _EPS_Y * z


def _segment_crossing(p, q, r, s):
    """Interior crossing of projected segments pq and rs, or None.

    Returns (t, u) parameters along pq and rs, both strictly in (0, 1).
    Parallel or endpoint-touching pairs yield None; an improper overlap
    raises, since the projection is supposed to exclude it.
    """
    (pu, pv), (qu, qv) = _project(p), _project(q)
    (ru, rv), (su, sv) = _project(r), _project(s)
    d1u, d1v = qu - pu, qv - pv
    d2u, d2v = su - ru, sv - rv
    den = d1u * d2v - d1v * d2u
    wu, wv = ru - pu, rv - pv
    if den == 0:
        if wu * d1v == wv * d1u:
            # Collinear projections: two edges on the same 3-D line stay
            # collinear under any projection, so only a genuine overlap is
            # degenerate; disjoint collinear segments simply do not cross.
            norm = d1u * d1u + d1v * d1v
            tr = (wu * d1u + wv * d1v) / norm
            ts = ((su - pu) * d1u + (sv - pv) * d1v) / norm
            lo, hi = min(tr, ts), max(tr, ts)
            if max(lo, 0) < min(hi, 1):
                raise ArithmeticError("overlapping collinear projected segments")
        return None
    t = (wu * d2v - wv * d2u) / den
    u = (wu * d1v - wv * d1u) / den
    if 0 < t < 1 and 0 < u < 1:
        return t, u
    if (t == 0 or t == 1) and 0 <= u <= 1:
        raise ArithmeticError("projected crossing at a vertex")
    return None


def _bareiss_det(rows: list[list[int]]) -> int:
    """Exact determinant of an integer matrix (fraction-free elimination)."""
    n = len(rows)
    if n == 0:
        return 1
    m = [row[:] for row in rows]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def knot_determinant(curve) -> int:
    """Knot determinant of a closed lattice polygon (1 for the unknot).

    The curve is projected along one axis with a fixed rational shear,
    its crossings are found exactly, and the determinant is the absolute
    value of a first minor of the Fox coloring matrix (rows: +2 over-arc,
    -1 each under-arc).  If a projection is degenerate (equal-height or
    vertex crossings), the other two axes are tried before giving up.
    """
    pts = [tuple(int(c) for c in p) for p in curve]
    last_err: ArithmeticError | None = None
    # project along z, then x, then y (cyclic coordinate permutations)
    for _axis in range(3):
        try:
            return _knot_determinant_z(pts)
        except ArithmeticError as err:
            last_err = err
            pts = [(y, z, x) for x, y, z in pts]
    raise ArithmeticError(f"all three projections degenerate: {last_err}")


def _knot_determinant_z(pts: list[tuple[int, int, int]]) -> int:
    n = len(pts)
    if n < 3:
        raise ValueError("need at least 3 vertices")
    segs = [(pts[i], pts[(i + 1) % n]) for i in range(n)]

    # crossings[(i, j)] = (t_i, t_j, over_is_i)
    crossings = []
    for i in range(n):
        p, q = segs[i]
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent segments share a vertex
            r, s = segs[j]
            hit = _segment_crossing(p, q, r, s)
            if hit is None:
                continue
            t, u = hit
            zi = Fraction(p[2]) + t * (Fraction(q[2]) - Fraction(p[2]))
            zj = Fraction(r[2]) + u * (Fraction(s[2]) - Fraction(r[2]))
            if zi == zj:
                raise ArithmeticError("crossing strands at equal height")
            crossings.append((i, t, j, u, zi > zj))

    if not crossings:
        return 1

    # split the ring into arcs at its under-crossing points
    unders = []  # (segment, parameter, crossing index)
    for ci, (i, t, j, u, over_is_i) in enumerate(crossings):
        if over_is_i:
            unders.append((j, u, ci))
        else:
            unders.append((i, t, ci))
    unders.sort(key=lambda e: (e[0], e[1]))
    n_arcs = len(unders)

    def arc_of(seg: int, par: Fraction) -> int:
        """Arc containing ring position (seg, par).

        Arc k runs from under-crossing k to under-crossing k+1 (cyclic),
        so a position belongs to the arc whose start precedes it last.
        """
        lo, hi = 0, n_arcs
        while lo < hi:
            mid = (lo + hi) // 2
            if unders[mid][:2] <= (seg, par):
                lo = mid + 1
            else:
                hi = mid
        return (lo - 1) % n_arcs

    rows = []
    for ci, (i, t, j, u, over_is_i) in enumerate(crossings):
        if over_is_i:
            over = arc_of(i, t)
        else:
            over = arc_of(j, u)
        k_in = next(k for k, e in enumerate(unders) if e[2] == ci)
        arc_in = (k_in - 1) % n_arcs  # arc ending at this under-crossing
        arc_out = k_in  # arc starting at it
        row = [0] * n_arcs
        row[over] += 2
        row[arc_in] -= 1
        row[arc_out] -= 1
        rows.append(row)

    minor = [row[:-1] for row in rows[:-1]]
    return abs(_bareiss_det(minor))


def analyze_rings(ring_coords: list[list[tuple[int, int, int]]]) -> EntanglementReport:
    """Knot determinants and pairwise linking numbers of a ring collection."""
    dets = [knot_determinant(ring) for ring in ring_coords]
    linking = {}
    for i in range(len(ring_coords)):
        for j in range(i + 1, len(ring_coords)):
            linking[(i, j)] = gauss_linking(ring_coords[i], ring_coords[j])
    return EntanglementReport(determinants=dets, linking=linking)


def analyze(config, lattice=None) -> EntanglementReport:
    """Entanglement report for a decoded ring configuration."""
    return analyze_rings(config.ring_coords(lattice))
