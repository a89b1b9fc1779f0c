"""Grids, generators, and boundary handling."""

import numpy as np
import pytest

from defectoscope.fields import (Field, GridSpec, generate,
                                 homogeneous_extension, perturb,
                                 restrict_boundary, smooth_random)
from defectoscope.manifolds import BUILTIN_TARGETS, norm_tree

RP2 = BUILTIN_TARGETS["RP2"]
S2 = BUILTIN_TARGETS["S2"]


def test_cube_grid_geometry():
    g = GridSpec.cube(21, dims=3)
    assert g.n == (21, 21, 21)
    assert g.h == pytest.approx(2.0 / 20.0)
    assert g.origin == (-1.0, -1.0, -1.0)
    assert np.allclose(g.center, 0.0)
    c = g.coords()
    assert c.shape == (21, 21, 21, 3)
    assert c[0, 0, 0] == pytest.approx([-1, -1, -1])
    assert c[-1, -1, -1] == pytest.approx([1, 1, 1])
    cc = g.cell_centers()
    assert cc.shape == (20, 20, 20, 3)
    assert cc[0, 0, 0] == pytest.approx(np.array([-1, -1, -1]) + g.h / 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec.cube(7)  # below the 8-node floor
    with pytest.raises(ValueError):
        GridSpec(n=(16,), h=0.1, origin=(0.0,))
    with pytest.raises(ValueError):
        GridSpec(n=(16, 16), h=-0.1, origin=(0.0, 0.0))


def test_ball_grid_masks():
    g = GridSpec.cube(16, dims=3, shape="ball")
    f = generate("constant", g, S2)
    assert f.inside.any() and not f.inside.all()
    # inside iff within the inscribed sphere of the node hull
    X = g.coords() - np.asarray(g.center)
    r = np.sqrt(np.sum(X * X, axis=-1))
    assert np.array_equal(f.inside, r <= g.ball_radius + 1e-9 * g.h)
    assert f.boundary.any()
    assert not (f.boundary & ~f.inside).any()
    # boundary nodes have an axis neighbor outside
    assert (f.free & f.boundary).sum() == 0


def test_box_boundary_is_hull():
    g = GridSpec.cube(9, dims=2)
    f = generate("constant", g, S2)
    assert f.inside.all()
    expect = np.zeros(g.n, dtype=bool)
    expect[0, :] = expect[-1, :] = True
    expect[:, 0] = expect[:, -1] = True
    assert np.array_equal(f.boundary, expect)


def test_constant_generator_and_value():
    g = GridSpec.cube(8, dims=2)
    f = generate("constant", g, S2, value=(0.0, 0.0, 1.0))
    assert np.allclose(f.values[..., 2], 1.0)
    with pytest.raises(ValueError):
        generate("constant", g, S2, value=(0.0, 0.0, 0.0, 1.0))


def test_random_generator_seeded():
    g = GridSpec.cube(10, dims=3)
    a = generate("random", g, RP2, seed=4)
    b = generate("random", g, RP2, seed=4)
    c = generate("random", g, RP2, seed=5)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert np.allclose(norm_tree(a.values), 1.0, atol=1e-12)


def test_values_are_canonical_representatives():
    from defectoscope.manifolds import canonical
    g = GridSpec.cube(9, dims=3)
    for kind in ("random", "hedgehog", "dipole-chain"):
        if kind == "dipole-chain":
            g2 = GridSpec.cube(40, dims=3)
            f = generate(kind, g2, S2)
        else:
            f = generate(kind, g, RP2, seed=2)
        assert np.array_equal(canonical(f.values, f.target), f.values)


def test_hedgehog_unit_radial():
    g = GridSpec.cube(12, dims=3, shape="ball")
    f = generate("hedgehog", g, S2)
    locus = f.singular_loci[0]
    assert locus["kind"] == "point"
    X = g.coords() - np.asarray(locus["point"])
    R = norm_tree(X)
    inside = f.inside
    expect = X[inside] / R[inside][..., None]
    assert np.allclose(f.values[inside], expect, atol=1e-12)


def test_vortex2d_needs_2d():
    g = GridSpec.cube(12, dims=3)
    with pytest.raises(ValueError):
        generate("vortex2d", g, S2)
    g2 = GridSpec.cube(12, dims=2, shape="ball")
    f = generate("vortex2d", g2, S2)
    assert np.allclose(f.values[f.inside][:, 2], 0.0)
    assert np.allclose(norm_tree(f.values), 1.0, atol=1e-12)


def test_disclination_k_values():
    g = GridSpec.cube(12, dims=2)
    fp = generate("disclination", g, RP2, k=0.5)
    fm = generate("disclination", g, RP2, k=-0.5)
    assert not np.array_equal(fp.values, fm.values)
    with pytest.raises(ValueError):
        generate("disclination", g, RP2, k=0.3)


def test_unknown_kind_rejected():
    g = GridSpec.cube(8, dims=2)
    with pytest.raises(ValueError):
        generate("spiral", g, S2)


def test_dipole_chain_loci_spacing():
    g = GridSpec.cube(48, dims=3)
    for n_pairs in (1, 2, 3):
        f = generate("dipole-chain", g, S2, n_pairs=n_pairs)
        pts = [l for l in f.singular_loci if l["kind"] == "point"]
        assert len(pts) == 2 * n_pairs
        assert sum(l["degree"] for l in pts) == 0
        by_pair = [(pts[2 * j], pts[2 * j + 1]) for j in range(n_pairs)]
        for j, (pos, neg) in enumerate(by_pair):
            assert pos["degree"] == 1 and neg["degree"] == -1
            sep = np.asarray(pos["point"]) - np.asarray(neg["point"])
            # separation along the first axis, snapped to cell centers
            assert abs(sep[0] - 2.0 ** (-(j + 1)) * np.pi) <= g.h
            assert sep[1] == 0.0 and sep[2] == 0.0


def test_dipole_chain_exactly_background_outside_support():
    g = GridSpec.cube(40, dims=3)
    f = generate("dipole-chain", g, S2, n_pairs=1)
    X = g.coords()
    pts = [np.asarray(l["point"]) for l in f.singular_loci]
    a = 3.0 * g.h
    dseg = np.full(g.n, np.inf)
    qx, px = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, z0 = pts[0][1], pts[0][2]
    ax = np.clip(X[..., 0], qx, px)
    dseg = np.sqrt((X[..., 0] - ax) ** 2 + (X[..., 1] - y0) ** 2
                   + (X[..., 2] - z0) ** 2)
    far = dseg > a + 1e-12
    assert np.allclose(f.values[far], [0.0, 0.0, 1.0], atol=1e-14)


def test_dipole_chain_rejects_coarse_grid():
    g = GridSpec.cube(16, dims=3)
    with pytest.raises(ValueError):
        generate("dipole-chain", g, S2, n_pairs=1)


def test_exterior_nodes_hold_fill_value():
    g = GridSpec.cube(12, dims=3, shape="ball")
    f = generate("random", g, S2, seed=0)
    out = ~f.inside
    assert np.allclose(f.values[out], [1.0, 0.0, 0.0])


def test_restrict_and_extend_boundary():
    g = GridSpec.cube(10, dims=3, shape="ball")
    f = generate("hedgehog", g, S2)
    bd = restrict_boundary(f)
    assert np.array_equal(bd.mask, f.boundary)
    ext = homogeneous_extension(bd)
    assert np.array_equal(ext.values[f.boundary], f.values[f.boundary])
    assert np.allclose(norm_tree(ext.values), 1.0, atol=1e-12)


def test_perturb_keeps_boundary_and_norm():
    g = GridSpec.cube(10, dims=2)
    f = generate("vortex2d", g, S2)
    q = perturb(f, 0.2, seed=3)
    assert np.array_equal(q.values[f.boundary], f.values[f.boundary])
    assert not np.array_equal(q.values[f.free], f.values[f.free])
    assert np.allclose(norm_tree(q.values), 1.0, atol=1e-12)
    assert np.array_equal(perturb(f, 0.2, seed=3).values, q.values)


def test_smooth_random_resolves_edges():
    from defectoscope.lifting import edge_transports
    g = GridSpec.cube(12, dims=3)
    f = smooth_random(g, RP2, seed=1)
    assert all(ok.all() for _, ok in edge_transports(f))
    assert np.allclose(norm_tree(f.values), 1.0, atol=1e-12)


def test_field_shape_mismatch_rejected():
    g = GridSpec.cube(8, dims=2)
    with pytest.raises(ValueError):
        Field(g, S2, np.zeros((8, 8, 2)))
