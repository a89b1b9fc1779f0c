"""Edge transports, plaquette holonomy, obstruction chains, and lifts."""

import numpy as np
import pytest

from defectoscope.fields import Field, GridSpec, generate, smooth_random
from defectoscope.lifting import (NonOrientableRegionError, ObstructionChain,
                                  ResolutionError, Unresolved,
                                  edge_transport, edge_transports,
                                  lift_region, obstruction_chain,
                                  plaquette_holonomy)
from defectoscope.manifolds import BUILTIN_TARGETS, canonical, norm_tree

RP2 = BUILTIN_TARGETS["RP2"]
S2 = BUILTIN_TARGETS["S2"]


def _extruded_disclination(n):
    """2D +1/2 disclination extruded along z: a straight line defect."""
    g2 = GridSpec.cube(n, dims=2)
    f2 = generate("disclination", g2, RP2)
    g3 = GridSpec.cube(n, dims=3)
    vals = np.repeat(f2.values[:, :, None, :], n, axis=2)
    return Field(g3, RP2, vals)


def test_trivial_group_transports_are_identity():
    g = GridSpec.cube(8, dims=2)
    f = generate("random", g, S2, seed=0)
    for gi, ok in edge_transports(f):
        assert np.all(gi == 0)
        assert ok.all()


def test_smooth_field_edges_all_resolved():
    g = GridSpec.cube(10, dims=3)
    f = smooth_random(g, RP2, seed=1)
    for gi, ok in edge_transports(f):
        assert ok.all()


def test_edge_transport_moves_tail_near_head():
    g = GridSpec.cube(10, dims=2)
    f = smooth_random(g, RP2, seed=2)
    group = RP2.group
    for ax, (gi, ok) in enumerate(edge_transports(f)):
        sa = f.values[tuple(slice(None, -1) if a == ax else slice(None)
                            for a in range(2))]
        sb = f.values[tuple(slice(1, None) if a == ax else slice(None)
                            for a in range(2))]
        moved = np.stack([group.apply(g_, sa) for g_ in range(len(group))])
        picked = np.take_along_axis(
            moved, gi[None, ..., None], axis=0)[0]
        d_pick = norm_tree(sb - picked)
        # minimality: picked transport is no worse than either deck image
        for g_ in range(len(group)):
            assert np.all(d_pick <= norm_tree(sb - moved[g_]) + 1e-12)


def test_perpendicular_directors_stay_unresolved():
    g = GridSpec.cube(8, dims=2)
    f = generate("constant", g, RP2, value=(1.0, 0.0, 0.0))
    # one exact 90-degree edge: distance ties for both deck images
    f.values[1, 1] = np.array([0.0, 1.0, 0.0])
    out = edge_transport(f, (0, (0, 1)))
    assert isinstance(out, Unresolved)
    assert out.edge == (0, (0, 1))


def test_plaquette_holonomy_identity_on_smooth_field():
    g = GridSpec.cube(8, dims=3)
    f = smooth_random(g, RP2, seed=3)
    assert plaquette_holonomy(f, ((0, 1), (2, 3, 4))) == 0
    assert plaquette_holonomy(f, ((1, 2), (4, 2, 1))) == 0


def test_disclination_core_plaquette_has_holonomy():
    g = GridSpec.cube(16, dims=2)
    f = generate("disclination", g, RP2)
    chain = obstruction_chain(f)
    assert not chain.is_empty
    # exactly one odd plaquette: the core
    assert len(chain.support) == 1
    axes, base, coeff = chain.support[0]
    assert axes == (0, 1)
    assert coeff != RP2.group.identity_index
    assert plaquette_holonomy(f, (axes, base)) == coeff
    # the core sits at the grid center
    cx = chain.plaquette_center(axes, base)
    assert np.linalg.norm(np.asarray(cx) - np.asarray(g.center)) <= 1.5 * g.h


def test_chain_support_stable_under_refinement():
    for n in (16, 32):
        f = generate("disclination", GridSpec.cube(n, dims=2), RP2)
        chain = obstruction_chain(f)
        assert len(chain.support) == 1
        assert chain.length == pytest.approx(f.grid.h)


def test_rough_field_raises_resolution_error():
    g = GridSpec.cube(10, dims=3)
    f = generate("random", g, RP2, seed=4)
    with pytest.raises(ResolutionError) as err:
        obstruction_chain(f)
    assert len(err.value.edges) > 0


def test_extruded_line_chain_is_boundaryless_polyline():
    n = 12
    f = _extruded_disclination(n)
    chain = obstruction_chain(f)
    # one odd (0,1)-plaquette per z-layer of edges
    assert len(chain.support) == n
    assert all(axes == (0, 1) for axes, _, _ in chain.support)
    active = np.ones((n - 1,) * 3, dtype=bool)
    # straight line: every interior cube sees two canceling faces
    assert chain.cycle_defects(active) == []
    lines = chain.polylines(active)
    assert len(lines) == 1
    line = lines[0]
    assert not line["closed"]
    assert line["boundary_ends"] == (True, True)
    assert len(line["points"]) == n
    # the dual polyline runs parallel to the z-axis through the core
    pts = np.asarray(line["points"])
    assert np.ptp(pts[:, 0]) == 0.0 and np.ptp(pts[:, 1]) == 0.0
    seg = chain.segments(active)
    assert len(seg) == n
    assert sum(b for s in seg for b in s["boundary"]) == 2


def test_chain_segments_flag_domain_boundary():
    f = _extruded_disclination(10)
    chain = obstruction_chain(f)
    active = np.ones((9,) * 3, dtype=bool)
    segs = chain.segments(active)
    ends = [s for s in segs if any(s["boundary"])]
    assert len(ends) == 2


def test_lift_region_round_trip_node_exact():
    g = GridSpec.cube(10, dims=3, shape="ball")
    for seed in range(5):
        f = smooth_random(g, RP2, seed=seed)
        region = f.inside
        seed_node = tuple(np.argwhere(region)[0])
        v = lift_region(f, region, seed_node)
        assert np.array_equal(canonical(v, RP2)[region], f.values[region])
        assert np.allclose(norm_tree(v[region]), 1.0, atol=1e-12)
        # adjacent lifted values sit at the minimal chordal distance
        for ax in range(3):
            sa = tuple(slice(None, -1) if a == ax else slice(None)
                       for a in range(3))
            sb = tuple(slice(1, None) if a == ax else slice(None)
                       for a in range(3))
            both = region[sa] & region[sb]
            plain = norm_tree(v[sb] - v[sa])
            flip = norm_tree(v[sb] + v[sa])
            assert np.all(plain[both] <= flip[both] + 1e-12)


def test_lift_region_unique_up_to_deck_element():
    g = GridSpec.cube(8, dims=3)
    f = smooth_random(g, RP2, seed=6)
    region = np.ones(g.n, dtype=bool)
    seed_node = (4, 4, 4)
    v1 = lift_region(f, region, seed_node)
    v2 = lift_region(f, region, seed_node, seed_lift=-v1[seed_node])
    assert np.array_equal(v2, -v1)
    with pytest.raises(ValueError):
        lift_region(f, region, seed_node, seed_lift=(2.0, 0.0, 0.0))


def test_lift_region_agrees_on_subregion():
    g = GridSpec.cube(10, dims=3)
    f = smooth_random(g, RP2, seed=7)
    full = np.ones(g.n, dtype=bool)
    sub = np.zeros(g.n, dtype=bool)
    sub[2:8, 2:8, 2:8] = True
    seed_node = (4, 4, 4)
    lift = f.values[seed_node].copy()
    v_full = lift_region(f, full, seed_node, seed_lift=lift)
    v_sub = lift_region(f, sub, seed_node, seed_lift=lift)
    assert np.array_equal(v_full[sub], v_sub[sub])


def test_lift_region_rejects_nonorientable_region():
    g = GridSpec.cube(16, dims=2)
    f = generate("disclination", g, RP2)
    region = np.ones(g.n, dtype=bool)
    with pytest.raises(NonOrientableRegionError):
        lift_region(f, region, (0, 0))


def test_lift_region_validates_inputs():
    g = GridSpec.cube(8, dims=2)
    f = smooth_random(g, RP2, seed=8)
    region = np.zeros(g.n, dtype=bool)
    region[2:5, 2:5] = True
    with pytest.raises(ValueError):
        lift_region(f, region, (0, 0))  # seed outside region
    with pytest.raises(ValueError):
        lift_region(f, np.ones((3, 3), dtype=bool), (0, 0))  # bad shape
    disconnected = np.zeros(g.n, dtype=bool)
    disconnected[0, 0] = True
    disconnected[5, 5] = True
    with pytest.raises(ValueError):
        lift_region(f, disconnected, (0, 0))


def test_trivial_target_lift_is_a_copy():
    g = GridSpec.cube(8, dims=2)
    f = generate("random", g, S2, seed=9)
    v = lift_region(f, np.ones(g.n, dtype=bool), (0, 0))
    assert np.array_equal(v, f.values)
    assert v is not f.values
