"""Linking numbers and knot determinants, checked against independent
implementations: a brute-force Fox p-coloring counter and a signed
projected-crossing linking computation."""

from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from qubodos.enumeration import enumerate_melt
from qubodos.ringmelt import CuboidLattice
from qubodos.topology import (
    EntanglementReport,
    analyze,
    analyze_rings,
    gauss_linking,
    knot_determinant,
)

SQUARE_A = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
SQUARE_FAR = [(5, 5, 5), (6, 5, 5), (6, 6, 5), (5, 6, 5)]

# x-axis rectangle threaded by a y-axis rectangle: Hopf link
HOPF_A = [
    (0, 0, 0), (1, 0, 0), (2, 0, 0), (2, 1, 0),
    (2, 2, 0), (1, 2, 0), (0, 2, 0), (0, 1, 0),
]
HOPF_B = [
    (1, 1, -1), (1, 1, 0), (1, 1, 1), (1, 2, 1),
    (1, 3, 1), (1, 3, 0), (1, 3, -1), (1, 2, -1),
]

# 20-vertex lattice trefoil (closed, unit-step after corner jogs are
# walked edge by edge is not required; segments are axis-aligned)
TREFOIL = [
    (0, 0, 0), (0, 0, 1), (0, 2, 1), (0, 2, 0), (2, 2, 0),
    (2, 2, 1), (2, 4, 1), (2, 4, 0), (4, 4, 0), (4, 4, 1),
    (4, 1, 1), (4, 1, 0), (1, 1, 0), (1, 1, 1), (1, 3, 1),
    (1, 3, 0), (3, 3, 0), (3, 3, 1), (3, 0, 1), (3, 0, 0),
]


# -- independent oracles ---------------------------------------------------


def _projected_crossings(curve_a, curve_b):
    """Signed crossings of curve_a over curve_b in a sheared projection.

    Uses exact rational arithmetic; an independent realization of the
    linking number as half the signed crossing count between the curves.
    """
    ex, ey = Fraction(1, 997), Fraction(3, 991)

    def proj(p):
        x, y, z = (Fraction(int(c)) for c in p)
        return x - ex * z, y - ey * z, z

    def segs(curve):
        pts = [proj(p) for p in curve]
        return list(zip(pts, pts[1:] + pts[:1]))

    total = 0
    for (p, q) in segs(curve_a):
        for (r, s) in segs(curve_b):
            d1 = (q[0] - p[0], q[1] - p[1])
            d2 = (s[0] - r[0], s[1] - r[1])
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if den == 0:
                continue
            rx, ry = r[0] - p[0], r[1] - p[1]
            t = (rx * d2[1] - ry * d2[0]) / den
            u = (rx * d1[1] - ry * d1[0]) / den
            if not (0 < t < 1 and 0 < u < 1):
                continue
            za = p[2] + t * (q[2] - p[2])
            zb = r[2] + u * (s[2] - r[2])
            if za == zb:
                raise ArithmeticError("degenerate projection")
            sign = 1 if den > 0 else -1
            total += sign if za > zb else -sign
    assert total % 2 == 0
    return total // 2


def _fox_colorings(curve, p):
    """Count Fox p-colorings by brute force over the projected diagram.

    For a knot K, the count is p * |H|, where |H| = p iff p divides the
    determinant; p = 3 distinguishes the trefoil (9) from the unknot (3).
    """
    ex, ey = Fraction(1, 997), Fraction(3, 991)

    def proj(pt):
        x, y, z = (Fraction(int(c)) for c in pt)
        return x - ex * z, y - ey * z, z

    pts = [proj(pt) for pt in curve]
    seg_list = list(zip(range(len(pts)), pts, pts[1:] + pts[:1]))
    crossings = []  # (over_seg, under_seg, t_under)
    for ia, pa, qa in seg_list:
        for ib, pb, qb in seg_list:
            if ia >= ib:
                continue
            d1 = (qa[0] - pa[0], qa[1] - pa[1])
            d2 = (qb[0] - pb[0], qb[1] - pb[1])
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if den == 0:
                continue
            rx, ry = pb[0] - pa[0], pb[1] - pa[1]
            t = (rx * d2[1] - ry * d2[0]) / den
            u = (rx * d1[1] - ry * d1[0]) / den
            if not (0 < t < 1 and 0 < u < 1):
                continue
            za = pa[2] + t * (qa[2] - pa[2])
            zb = pb[2] + u * (qb[2] - pb[2])
            if za > zb:
                crossings.append((ia, (ib, u)))
            else:
                crossings.append((ib, (ia, t)))
    if not crossings:
        return p  # unknot diagram: constant colorings only

    # split the curve into arcs at under-crossing points
    unders = sorted(c[1] for c in crossings)
    arc_of_point = {}
    for k, (seg, t) in enumerate(unders):
        arc_of_point[(seg, t)] = k

    def arc_at(seg, t):
        """Arc containing parameter t of segment seg (between cuts)."""
        later = [(s2, t2) for (s2, t2) in unders if (s2, t2) > (seg, t)]
        if later:
            return arc_of_point[later[0]]
        return arc_of_point[unders[0]]

    n_arcs = len(unders)
    count = 0
    for colors in product(range(p), repeat=n_arcs):
        ok = True
        for over_seg, (under_seg, t_u) in crossings:
            # over arc: arc containing the midpoint of the over segment
            over = colors[arc_at(over_seg, Fraction(1, 2))]
            inc = colors[arc_of_point[(under_seg, t_u)]]
            out = colors[arc_at(under_seg, t_u)]
            if (2 * over - inc - out) % p != 0:
                ok = False
                break
        if ok:
            count += 1
    return count


# -- tests -----------------------------------------------------------------


class TestGaussLinking:
    def test_disjoint_coplanar_squares_unlinked(self):
        assert gauss_linking(SQUARE_A, SQUARE_FAR) == 0

    def test_hopf_pair(self):
        assert abs(gauss_linking(HOPF_A, HOPF_B)) == 1

    def test_orientation_negates(self):
        lk = gauss_linking(HOPF_A, HOPF_B)
        assert gauss_linking(HOPF_A, HOPF_B[::-1]) == -lk
        assert gauss_linking(HOPF_A[::-1], HOPF_B) == -lk

    def test_symmetric_in_arguments(self):
        assert gauss_linking(HOPF_B, HOPF_A) == gauss_linking(HOPF_A, HOPF_B)

    def test_cyclic_rotation_invariance(self):
        lk = gauss_linking(HOPF_A, HOPF_B)
        rotated = HOPF_A[3:] + HOPF_A[:3]
        assert gauss_linking(rotated, HOPF_B) == lk

    def test_translation_invariance(self):
        shift = np.array([7, -3, 11])
        a = (np.array(HOPF_A) + shift).tolist()
        b = (np.array(HOPF_B) + shift).tolist()
        assert gauss_linking(a, b) == gauss_linking(HOPF_A, HOPF_B)

    @pytest.mark.parametrize(
        "pair",
        [(SQUARE_A, SQUARE_FAR), (HOPF_A, HOPF_B)],
    )
    def test_matches_crossing_sign_oracle(self, pair):
        assert gauss_linking(*pair) == _projected_crossings(*pair)


class TestKnotDeterminant:
    def test_planar_rectangle_is_unknot(self):
        assert knot_determinant(SQUARE_A) == 1
        assert knot_determinant(HOPF_A) == 1

    def test_trefoil(self):
        assert knot_determinant(TREFOIL) == 3

    def test_trefoil_reversed(self):
        assert knot_determinant(TREFOIL[::-1]) == 3

    def test_trefoil_translated(self):
        shifted = (np.array(TREFOIL) + np.array([2, 5, 1])).tolist()
        assert knot_determinant(shifted) == 3

    def test_trefoil_rotated_start(self):
        rotated = TREFOIL[7:] + TREFOIL[:7]
        assert knot_determinant(rotated) == 3

    def test_coaxial_edges_are_not_degenerate(self):
        # Two edges on the same 3-D line stay collinear under every
        # projection axis; they must count as non-crossing, not degenerate.
        ring = [
            (0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 0, 2), (0, 0, 2),
            (0, 0, 3), (0, 1, 3), (0, 1, 2), (0, 1, 1), (0, 1, 0),
        ]
        assert knot_determinant(ring) == 1

    def test_fox_coloring_oracle(self):
        # colorings = p * (p if p | det else 1)
        assert _fox_colorings(TREFOIL, 3) == 9
        assert _fox_colorings(TREFOIL, 5) == 5
        assert _fox_colorings(HOPF_A, 3) == 3


class TestReports:
    def test_analyze_rings_hopf(self):
        report = analyze_rings([HOPF_A, HOPF_B])
        assert report.n_rings == 2
        assert report.determinants == [1, 1]
        assert report.n_linked_pairs == 1
        assert report.is_linked and not report.is_knotted
        assert report.is_entangled
        assert report.max_abs_linking == 1

    def test_analyze_rings_unlinked(self):
        report = analyze_rings([SQUARE_A, SQUARE_FAR])
        assert not report.is_entangled
        assert report.n_linked_pairs == 0

    def test_all_332_melts_trivial(self):
        """Every 3x3x2 melt is unknotted; record how many are linked."""
        _, configs = enumerate_melt(CuboidLattice((3, 3, 2)))
        lat = CuboidLattice((3, 3, 2))
        linked = 0
        for config in configs[::41]:
            report = analyze(config, lat)
            assert all(d == 1 for d in report.determinants)
            linked += report.is_linked
        assert linked == 0  # the lattice is too thin for linked rings
