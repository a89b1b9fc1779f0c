"""Discrete orientability analysis on the node grid.

Edge transports pick, per grid edge, the deck element carrying one
endpoint's representative closest to the other's. Plaquette holonomy
composes the four transports around an oriented plaquette; non-identity
holonomy marks the dual 1-cell as obstruction support (the discrete
non-orientable defect line). Regions with identity holonomy on every
enclosed plaquette admit a sphere-valued lift, propagated along a
breadth-first spanning tree.

Deck groups here are abelian (asserted at construction), so holonomy
compositions need no base-point bookkeeping.
"""

from collections import deque
from dataclasses import dataclass, field as dc_field
from itertools import combinations

import numpy as np

from .manifolds import norm_tree

MARGIN_FACTOR = 0.05


class ResolutionError(ValueError):
    """Edge transports ambiguous at this grid resolution."""

    def __init__(self, edges):
        self.edges = list(edges)
        head = ", ".join(f"(axis {ax}, node {tuple(int(v) for v in ix)})"
                         for ax, ix in self.edges[:8])
        more = "" if len(self.edges) <= 8 else f" and {len(self.edges) - 8} more"
        super().__init__(
            f"insufficient resolution: {len(self.edges)} unresolved edge(s): "
            f"{head}{more}; refine the grid or smooth the field")


class NonOrientableRegionError(ValueError):
    """A plaquette inside the requested lift region carries holonomy."""

    def __init__(self, plaquette):
        self.plaquette = plaquette
        axes, base = plaquette
        super().__init__(
            f"non-orientable region: plaquette axes {axes} at node "
            f"{tuple(int(v) for v in base)} has non-identity holonomy")


@dataclass(frozen=True)
class Unresolved:
    """Ambiguous transport marker; carries the offending edge."""

    edge: tuple


def _edge_pair(values, ax):
    sa = [slice(None)] * (values.ndim - 1) + [slice(None)]
    sb = list(sa)
    sa[ax] = slice(None, -1)
    sb[ax] = slice(1, None)
    return values[tuple(sa)], values[tuple(sb)]


def edge_transports(field):
    """Per-axis minimizing deck indices and margin-resolved masks.

    For each grid edge a -> a+e_ax the transport is the deck element g
    minimizing |g(n_a) - n_b|; the edge is resolved when the runner-up
    exceeds the minimum by more than MARGIN_FACTOR times the group's
    chordal separation (exact ties, e.g. perpendicular directors, stay
    unresolved at any resolution).
    """
    group = field.target.group
    values = field.values
    d = values.ndim - 1
    out = []
    if group is None or len(group) == 1:
        for ax in range(d):
            a, _ = _edge_pair(values, ax)
            shape = a.shape[:-1]
            out.append((np.zeros(shape, dtype=np.intp),
                        np.ones(shape, dtype=bool)))
        return out
    margin = MARGIN_FACTOR * group.separation
    for ax in range(d):
        a, b = _edge_pair(values, ax)
        dists = np.stack([norm_tree(group.apply(g, a) - b)
                          for g in range(len(group))])
        gi = np.argmin(dists, axis=0)
        two = np.partition(dists, 1, axis=0)
        ok = (two[1] - two[0]) > margin
        out.append((gi.astype(np.intp), ok))
    return out


def edge_transport(field, edge):
    """Deck index for a single edge (axis, base node), or Unresolved."""
    ax, base = edge
    transports = edge_transports(field)
    gi, ok = transports[ax]
    idx = tuple(base)
    if not ok[idx]:
        return Unresolved(edge=(ax, tuple(base)))
    return int(gi[idx])


def _axis_pairs(d):
    return list(combinations(range(d), 2))


def _plaquette_terms(transports, group, a1, a2):
    """Holonomy index array and resolved mask for orientation (a1, a2).

    Walks base -> +a1 -> +a2 corner -> back: the two far edges enter
    inverted. Base grid drops the last node along a1 and a2.
    """
    g1, ok1 = transports[a1]
    g2, ok2 = transports[a2]

    def cut(arr, ax):
        sl = [slice(None)] * arr.ndim
        sl[ax] = slice(None, -1)
        return arr[tuple(sl)]

    def shift(arr, ax):
        sl = [slice(None)] * arr.ndim
        sl[ax] = slice(1, None)
        return arr[tuple(sl)]

    A = cut(g1, a2)          # edge along a1 at base
    B = shift(g2, a1)        # edge along a2 at base + e_a1
    C = shift(g1, a2)        # edge along a1 at base + e_a2 (reversed)
    D = cut(g2, a1)          # edge along a2 at base (reversed)
    inv = group.inverse
    comp = group.compose
    hol = comp[comp[A, B], comp[inv[C], inv[D]]]
    ok = cut(ok1, a2) & shift(ok2, a1) & shift(ok1, a2) & cut(ok2, a1)
    return hol, ok


def _plaquette_inside(inside, a1, a2):
    """Plaquettes whose four corner nodes are all inside the domain."""
    def take(i1, i2):
        sl = [slice(None)] * inside.ndim
        sl[a1] = slice(1, None) if i1 else slice(None, -1)
        sl[a2] = slice(1, None) if i2 else slice(None, -1)
        return inside[tuple(sl)]

    return take(0, 0) & take(1, 0) & take(0, 1) & take(1, 1)


def plaquette_holonomy(field, plaquette):
    """Holonomy index around one plaquette ((a1, a2), base node).

    Identity index means locally orientable across this plaquette.
    Returns Unresolved naming the first ambiguous edge otherwise.
    """
    (a1, a2), base = plaquette
    group = field.target.group
    transports = edge_transports(field)
    if group is None or len(group) == 1:
        return 0
    base = tuple(base)
    e1 = tuple(1 if a == a1 else 0 for a in range(len(base)))
    e2 = tuple(1 if a == a2 else 0 for a in range(len(base)))
    walk = [(a1, base), (a2, tuple(b + o for b, o in zip(base, e1))),
            (a1, tuple(b + o for b, o in zip(base, e2))), (a2, base)]
    for ax, ix in walk:
        if not transports[ax][1][ix]:
            return Unresolved(edge=(ax, ix))
    g = [int(transports[ax][0][ix]) for ax, ix in walk]
    comp = group.compose
    inv = group.inverse
    return int(comp[comp[g[0], g[1]], comp[inv[g[2]], inv[g[3]]]])


@dataclass
class ObstructionChain:
    """Dual 1-chain of plaquette holonomies with G coefficients.

    holonomy maps each axis pair to the per-plaquette deck index;
    participating masks restrict to plaquettes with all corners inside
    the domain. Support records the non-identity participating cells;
    the counting-norm length weights each by h.
    """

    grid: object
    group: object
    holonomy: dict
    participating: dict
    support: list = dc_field(default_factory=list)

    @property
    def length(self):
        return len(self.support) * self.grid.h

    @property
    def is_empty(self):
        return not self.support

    def plaquette_center(self, axes, base):
        a1, a2 = axes
        x = [self.grid.origin[a] + self.grid.h * base[a]
             for a in range(self.grid.dims)]
        x[a1] += self.grid.h / 2.0
        x[a2] += self.grid.h / 2.0
        return tuple(x)

    def _cell_center(self, cell):
        return tuple(self.grid.origin[a] + self.grid.h * (cell[a] + 0.5)
                     for a in range(self.grid.dims))

    def cycle_defects(self, active):
        """Interior cubes where the signed face composition is not the
        identity; exact group arithmetic, empty list means the chain is
        boundaryless. 2D grids have no cubes."""
        if self.grid.dims == 2:
            return []
        comp = self.group.compose
        inv = self.group.inverse
        h01 = self.holonomy[(0, 1)]
        h02 = self.holonomy[(0, 2)]
        h12 = self.holonomy[(1, 2)]
        # boundary of the cube: (F12+ - F12-) - (F02+ - F02-) + (F01+ - F01-)
        total = comp[h12[1:, :, :], inv[h12[:-1, :, :]]]
        total = comp[total, comp[inv[h02[:, 1:, :]], h02[:, :-1, :]]]
        total = comp[total, comp[h01[:, :, 1:], inv[h01[:, :, :-1]]]]
        bad = (total != self.group.identity_index) & active
        return [tuple(int(v) for v in ix) for ix in np.argwhere(bad)]

    def segments(self, active):
        """Dual segments per support plaquette: endpoints are adjacent
        active cube centers, or the plaquette center on a one-sided
        (domain boundary) plaquette."""
        out = []
        for axes, base, coeff in self.support:
            center = self.plaquette_center(axes, base)
            if self.grid.dims == 2:
                out.append({"axes": axes, "base": base, "coeff": coeff,
                            "points": (center, center),
                            "boundary": (True, True)})
                continue
            a3 = ({0, 1, 2} - set(axes)).pop()
            lo = list(base)
            lo[a3] -= 1
            sides = []
            bd = []
            for cell in (tuple(lo), base):
                okc = all(0 <= cell[a] <= self.grid.n[a] - 2 for a in range(3))
                if okc and active[cell]:
                    sides.append(self._cell_center(cell))
                    bd.append(False)
                else:
                    sides.append(center)
                    bd.append(True)
            out.append({"axes": axes, "base": base, "coeff": coeff,
                        "points": (sides[0], sides[1]),
                        "boundary": (bd[0], bd[1])})
        return out

    def polylines(self, active):
        """Greedy pairing of support plaquettes through shared active
        cubes into dual polylines (walk order; presentation only, the
        chain itself is the ground truth). 2D support degrades to
        isolated points."""
        if self.grid.dims == 2:
            return [{"points": [self.plaquette_center(axes, base)],
                     "closed": False, "boundary_ends": (True, True)}
                    for axes, base, _ in self.support]

        sides = []  # per support id: [side0, side1], side = cell or None
        cube_inc = {}
        for sid, (axes, base, _) in enumerate(self.support):
            a3 = ({0, 1, 2} - set(axes)).pop()
            lo = list(base)
            lo[a3] -= 1
            rec = []
            for cell in (tuple(lo), tuple(base)):
                okc = all(0 <= cell[a] <= self.grid.n[a] - 2 for a in range(3))
                if okc and active[cell]:
                    rec.append(cell)
                    cube_inc.setdefault(cell, []).append(sid)
                else:
                    rec.append(None)
            sides.append(rec)

        used = [False] * len(self.support)

        def walk(sid, entry_side):
            """Follow the chain from support plaquette sid, entering
            from entry_side (0/1); returns point list and end flag."""
            pts = []
            cur, side = sid, entry_side
            while True:
                used[cur] = True
                axes, base, _ = self.support[cur]
                pts.append(self.plaquette_center(axes, base))
                nxt_cell = sides[cur][1 - side]
                if nxt_cell is None:
                    return pts, True  # ends on the domain boundary
                cont = None
                for cand in cube_inc[nxt_cell]:
                    if not used[cand]:
                        cont = cand
                        break
                if cont is None:
                    return pts, False
                cur = cont
                side = 0 if sides[cont][0] == nxt_cell else 1

        lines = []
        for sid in range(len(self.support)):
            if used[sid]:
                continue
            s0, s1 = sides[sid]
            if s0 is not None and s1 is not None:
                continue  # interior start; cycles handled below
            entry = 0 if s0 is None else 1
            pts, ended_bd = walk(sid, entry)
            lines.append({"points": pts, "closed": False,
                          "boundary_ends": (True, ended_bd)})
        for sid in range(len(self.support)):
            if used[sid]:
                continue
            pts, _ = walk(sid, 0)
            lines.append({"points": pts, "closed": True,
                          "boundary_ends": (False, False)})
        return lines


def obstruction_chain(field):
    """The dual obstruction chain of all participating plaquettes.

    Raises ResolutionError listing the ambiguous edges if any edge of a
    participating plaquette is unresolved. Empty support means the field
    lifts on every ball in the domain.
    """
    grid = field.grid
    group = field.target.group
    d = grid.dims
    inside = field.inside
    transports = edge_transports(field)
    trivial = group is None or len(group) == 1

    holonomy = {}
    participating = {}
    bad_edges = []
    for a1, a2 in _axis_pairs(d):
        part = _plaquette_inside(inside, a1, a2)
        participating[(a1, a2)] = part
        if trivial:
            holonomy[(a1, a2)] = np.zeros(part.shape, dtype=np.intp)
            continue
        hol, ok = _plaquette_terms(transports, group, a1, a2)
        holonomy[(a1, a2)] = hol
        need = part & ~ok
        if need.any():
            # recover the concrete unresolved edges for the error report
            for base in np.argwhere(need):
                base = tuple(int(v) for v in base)
                res = plaquette_holonomy(field, ((a1, a2), base))
                if isinstance(res, Unresolved):
                    bad_edges.append(res.edge)
    if bad_edges:
        seen = []
        for e in bad_edges:
            if e not in seen:
                seen.append(e)
        raise ResolutionError(seen)

    ident = 0 if trivial else group.identity_index
    support = []
    for pair in _axis_pairs(d):
        mask = participating[pair] & (holonomy[pair] != ident)
        for base in np.argwhere(mask):
            base = tuple(int(v) for v in base)
            support.append((pair, base, int(holonomy[pair][base])))
    return ObstructionChain(grid=grid, group=group, holonomy=holonomy,
                            participating=participating, support=support)


def lift_region(field, region, seed_node, seed_lift=None):
    """Sphere-valued lift of the field over an edge-connected region.

    Breadth-first propagation from seed_node: crossing edge a -> b
    applies the inverse transport to b's representative, so adjacent
    lifted values differ by the minimal chordal distance. The result v
    satisfies canonical(v) == field on the region, node-exactly, and is
    unique up to the single deck element fixed by seed_lift (default:
    the stored representative at the seed).

    Raises NonOrientableRegionError if any plaquette whose corners all
    lie in the region carries holonomy, ResolutionError on ambiguous
    region edges, ValueError if the region is not edge-connected.
    """
    grid = field.grid
    group = field.target.group
    d = grid.dims
    region = np.asarray(region, dtype=bool)
    if region.shape != grid.n:
        raise ValueError("region mask shape does not match the grid")
    seed_node = tuple(int(v) for v in seed_node)
    if not region[seed_node]:
        raise ValueError("seed node lies outside the region")

    values = field.values
    trivial = group is None or len(group) == 1
    if trivial:
        out = values.copy()
        return out

    transports = edge_transports(field)
    comp = group.compose
    inv = group.inverse

    # holonomy precondition on every plaquette enclosed by the region
    for a1, a2 in _axis_pairs(d):
        part = _plaquette_inside(region, a1, a2)
        hol, ok = _plaquette_terms(transports, group, a1, a2)
        bad = part & ok & (hol != group.identity_index)
        if bad.any():
            base = tuple(int(v) for v in np.argwhere(bad)[0])
            raise NonOrientableRegionError(((a1, a2), base))

    sigma = np.full(grid.n, -1, dtype=np.intp)
    if seed_lift is None:
        sigma[seed_node] = group.identity_index
    else:
        seed_lift = np.asarray(seed_lift, dtype=np.float64)
        start = None
        for g in range(len(group)):
            if np.array_equal(group.apply(g, values[seed_node]), seed_lift):
                start = g
                break
        if start is None:
            raise ValueError("seed lift is not a deck image of the field's "
                             "value at the seed node")
        sigma[seed_node] = start

    bad_edges = []
    queue = deque([seed_node])
    while queue:
        u = queue.popleft()
        su = sigma[u]
        for ax in range(d):
            for sign in (1, -1):
                w = list(u)
                w[ax] += sign
                if not (0 <= w[ax] < grid.n[ax]):
                    continue
                w = tuple(w)
                if not region[w] or sigma[w] >= 0:
                    continue
                base = u if sign == 1 else w
                gi, ok = transports[ax]
                if not ok[base]:
                    bad_edges.append((ax, base))
                    continue
                g_uw = int(gi[base]) if sign == 1 else int(inv[gi[base]])
                sigma[w] = comp[su, inv[g_uw]]
                queue.append(w)
    if bad_edges:
        raise ResolutionError(bad_edges)
    if (region & (sigma < 0)).any():
        raise ValueError("region is not edge-connected from the seed node")

    out = values.copy()
    for g in range(len(group)):
        mask = region & (sigma == g)
        if mask.any():
            out[mask] = group.apply(g, values[mask])
    return out
