"""Cell degrees, Jacobian charges, classification, and density profiles."""

import math

import numpy as np
import pytest

from defectoscope.defects import (UnderResolvedCellError, cell_degree,
                                  classify_defects, density_liminf,
                                  dyadic_radii, hedgehog_density_constant,
                                  jacobian_charges, monotonicity_check,
                                  scaled_density, singular_set_estimate)
from defectoscope.elastic import PowerModulus
from defectoscope.fields import GridSpec, generate, smooth_random
from defectoscope.manifolds import BUILTIN_TARGETS

RP2 = BUILTIN_TARGETS["RP2"]
S2 = BUILTIN_TARGETS["S2"]
MOD = PowerModulus(p=1.5, b=1.0)


def _cell_of(grid, x):
    x = np.asarray(x, dtype=np.float64)
    idx = np.floor((x - np.asarray(grid.origin)) / grid.h).astype(int)
    return tuple(int(min(max(v, 0), n - 2)) for v, n in zip(idx, grid.n))


def test_hedgehog_density_constant_formula():
    for p in (1.2, 1.5, 1.8):
        assert hedgehog_density_constant(p) == pytest.approx(
            2.0 ** (p / 2.0) * 4.0 * math.pi / (3.0 - p))


def test_cell_degree_hedgehog_oracle():
    g = GridSpec.cube(12, dims=3)
    f = generate("hedgehog", g, S2)
    anchor = f.singular_loci[0]["point"]
    core = _cell_of(g, anchor)
    deg, resid = cell_degree(f.values, core)
    assert deg == 1
    assert resid < 0.1
    # a cell away from the core is degree free
    far = tuple(c - 3 for c in core)
    deg, resid = cell_degree(f.values, far)
    assert deg == 0
    assert resid < 0.1


def test_cell_degree_constant_field_zero():
    g = GridSpec.cube(10, dims=3)
    f = generate("constant", g, S2)
    assert cell_degree(f.values, (4, 4, 4)) == (0, 0.0)


def test_cell_degree_validates_input():
    g = GridSpec.cube(10, dims=3)
    f = generate("constant", g, S2)
    with pytest.raises(ValueError):
        cell_degree(f.values, (9, 9, 9))  # not interior
    with pytest.raises(ValueError):
        cell_degree(f.values[..., :2], (4, 4, 4))  # not 3-component


def test_cell_degree_rejects_under_resolved_cell():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((2, 2, 2, 3))
    V /= np.linalg.norm(V, axis=-1, keepdims=True)
    with pytest.raises(UnderResolvedCellError):
        cell_degree(V, (0, 0, 0))


def test_charge_additivity_sub_boxes():
    # degrees telescope: the charge in a sub-box equals its boundary
    # degree, which for the hedgehog is 1 iff the box contains the core
    g = GridSpec.cube(12, dims=3)
    f = generate("hedgehog", g, S2)
    core = _cell_of(g, f.singular_loci[0]["point"])

    def box_charge(lo, hi):
        total = 0
        for c in np.ndindex(*(b - a for a, b in zip(lo, hi))):
            cell = tuple(a + o for a, o in zip(lo, c))
            d, _ = cell_degree(f.values, cell)
            total += d
        return total

    lo = tuple(c - 1 for c in core)
    hi = tuple(c + 2 for c in core)
    assert box_charge(lo, hi) == 1
    # shifted box that misses the core
    assert box_charge(tuple(c + 1 for c in core),
                      tuple(c + 4 for c in core)) == 0


def test_jacobian_charges_dipole_chain():
    g = GridSpec.cube(40, dims=3)
    f = generate("dipole-chain", g, S2, n_pairs=2)
    charges, details = jacobian_charges(f)
    assert details["chain"].is_empty
    assert not details["under_resolved_cells"]
    got = {cell: deg for cell, deg in charges}
    assert len(got) == 4
    for locus in f.singular_loci:
        cell = _cell_of(g, locus["point"])
        assert got.pop(cell) == locus["degree"]
    assert not got  # no spurious charges
    assert sum(deg for _, deg in charges) == 0


def test_jacobian_charges_rp2_hedgehog_sign_is_gauge():
    # the RP2 hedgehog image lifts two-sheeted; the lift fixes the sign
    # per component, so only |degree| is meaningful
    g = GridSpec.cube(16, dims=3, shape="ball")
    f = generate("hedgehog", g, RP2)
    charges, details = jacobian_charges(f)
    assert details["chain"].is_empty
    assert len(charges) == 1
    cell, deg = charges[0]
    assert abs(deg) == 1
    core = _cell_of(g, f.singular_loci[0]["point"])
    assert all(abs(a - b) <= 1 for a, b in zip(cell, core))


def test_jacobian_charges_needs_3d_s2_cover():
    f2 = generate("vortex2d", GridSpec.cube(16, dims=2), S2)
    with pytest.raises(ValueError):
        jacobian_charges(f2)
    f4 = generate("random", GridSpec.cube(8, dims=3),
                  BUILTIN_TARGETS["S3modZ4"], seed=0)
    with pytest.raises(ValueError):
        jacobian_charges(f4)


def test_classification_totality_and_disjointness():
    g = GridSpec.cube(16, dims=3, shape="ball")
    f = generate("hedgehog", g, RP2)
    report = classify_defects(f, MOD)
    flagged, _ = singular_set_estimate(f, MOD)
    line = set(report.line_cells)
    points = {p["cell"] for p in report.points}
    other = set(report.unclassified)
    assert line.isdisjoint(points)
    assert line.isdisjoint(other)
    assert points.isdisjoint(other)
    assert line | points | other == set(flagged)
    assert len(report.points) == 1
    assert abs(report.points[0]["degree"]) == 1
    assert report.chain_length == 0.0
    # every reported point carries a dyadic density profile
    assert set(report.profiles) == points


def test_classification_empty_on_constant_field():
    g = GridSpec.cube(12, dims=3)
    f = generate("constant", g, RP2)
    report = classify_defects(f, MOD)
    assert report.is_empty
    assert report.theta == pytest.approx(
        0.5 * hedgehog_density_constant(MOD.p))


def test_classification_line_cells_from_extruded_defect():
    from tests.test_lifting import _extruded_disclination

    f = _extruded_disclination(12)
    report = classify_defects(f, MOD)
    assert report.line_cells
    assert not report.points
    assert report.chain_length == pytest.approx(12 * f.grid.h)
    assert len(report.line_polylines) == 1


def test_scaled_density_profile_and_validation():
    g = GridSpec.cube(16, dims=3)
    f = generate("hedgehog", g, S2)
    x0 = np.asarray(f.singular_loci[0]["point"])
    prof = scaled_density(f, MOD, x0, [0.8, 0.4, 0.2])
    assert [r for r, _ in prof] == [0.8, 0.4, 0.2]
    assert all(v > 0 for _, v in prof)
    with pytest.raises(ValueError):
        scaled_density(f, MOD, x0, [g.h])  # below the 2h resolution floor
    with pytest.raises(ValueError):
        scaled_density(f, MOD, x0, [2.5])  # beyond the domain boundary


def test_dyadic_radii_ladder():
    g = GridSpec.cube(32, dims=3)
    radii = dyadic_radii(g, (0.0, 0.0, 0.0))
    assert radii[0] == pytest.approx(1.0)
    for a, b in zip(radii, radii[1:]):
        assert b == pytest.approx(a / 2.0)
    assert radii[-1] >= 4.0 * g.h
    assert radii[-1] / 2.0 < 4.0 * g.h
    with pytest.raises(ValueError):
        dyadic_radii(g, (0.999, 0.0, 0.0))  # hugging the boundary


def test_density_liminf_is_profile_min():
    g = GridSpec.cube(24, dims=3)
    f = generate("hedgehog", g, S2)
    x0 = np.asarray(f.singular_loci[0]["point"])
    val, prof = density_liminf(f, MOD, x0)
    assert val == pytest.approx(min(v for _, v in prof))


def test_monotonicity_identity_on_smooth_field():
    g = GridSpec.cube(24, dims=3, shape="ball")
    f = smooth_random(g, RP2, seed=3)
    res = monotonicity_check(f, MOD, g.center, 0.25, 0.8)
    assert res.rhs_nonnegative
    assert res.rhs >= -1e-12
    assert abs(res.psi_correction) <= res.psi_bound
    M = MOD.p * MOD.b ** (MOD.p / 2.0)
    expected = M * (4.0 * math.pi / 3.0) * (0.8 ** MOD.p
                                            - 0.25 ** MOD.p) / MOD.p
    assert res.psi_bound == pytest.approx(expected)
    assert res.residual == pytest.approx(res.lhs - res.rhs)
    assert len(res.profile) >= 2


def test_monotonicity_radius_validation():
    g = GridSpec.cube(24, dims=3, shape="ball")
    f = smooth_random(g, RP2, seed=4)
    with pytest.raises(ValueError):
        monotonicity_check(f, MOD, g.center, 0.5, 0.4)  # r >= R
    with pytest.raises(ValueError):
        monotonicity_check(f, MOD, g.center, g.h, 0.8)  # r below 2h
    with pytest.raises(ValueError):
        monotonicity_check(f, MOD, g.center, 0.25, 5.0)  # R outside
    f2 = generate("vortex2d", GridSpec.cube(16, dims=2), S2)
    with pytest.raises(ValueError):
        monotonicity_check(f2, MOD, (0.0, 0.0), 0.25, 0.8)


def test_singular_set_estimate_thresholding():
    g = GridSpec.cube(16, dims=3)
    f = generate("hedgehog", g, S2)
    cells_lo, scaled = singular_set_estimate(f, MOD, theta=1.0)
    cells_hi, _ = singular_set_estimate(f, MOD, theta=50.0)
    assert set(cells_hi) <= set(cells_lo)
    core = _cell_of(g, f.singular_loci[0]["point"])
    assert core in cells_lo
    assert scaled[core] > 1.0
    with pytest.raises(ValueError):
        singular_set_estimate(f, MOD, theta=0.0)
