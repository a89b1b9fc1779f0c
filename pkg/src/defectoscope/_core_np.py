"""Reference numpy kernels for the discrete elastic energy and its exact
gradient.

Cell energy: E = sum over active cells of h^d phi(t_c), where
t_c^2 = sum_axes (D_ax/h)^2 and D_ax is the arithmetic mean of the orbit
distances along the 2^{d-1} parallel edges of the cell. A cell is active
iff all its corner nodes are in the domain.

Gradient treats the per-edge minimizing deck element as locally constant
(valid almost everywhere) and emits zero on zero-length edges. The weight
phi'(t)/t is evaluated at max(t, delta) to remove the t -> 0 singularity
for b = 0.

All reductions are fixed-shape and deterministic; distances and deck
actions are bitwise deck-equivariant (see manifolds.dot_tree).
"""

import numpy as np

from .manifolds import norm_tree

BACKEND = "numpy"


def _edge_slices(ndim, ax):
    a = [slice(None)] * ndim
    b = [slice(None)] * ndim
    a[ax] = slice(None, -1)
    b[ax] = slice(1, None)
    return tuple(a), tuple(b)


def _edge_min_dist(U, group, ax, want_vectors):
    """Per-edge orbit distance along axis ax.

    Returns (s, gi, ev) with s the minimal distance, gi the minimizing deck
    index, ev the unit vector (n_b - g(n_a))/s (zeros where s = 0), or
    ev = None when not requested.
    """
    sa, sb = _edge_slices(U.ndim - 1, ax)
    Ua = U[sa]
    Ub = U[sb]
    if group is None or len(group) == 1:
        diff = Ub - Ua
        s = norm_tree(diff)
        gi = None
        if not want_vectors:
            return s, gi, None
        ev = np.zeros_like(diff)
        np.divide(diff, s[..., None], out=ev, where=s[..., None] > 0)
        return s, gi, ev

    k = len(group)
    best_s = None
    best_gi = None
    moved = []
    for g in range(k):
        ga = group.apply(g, Ua)
        moved.append(ga if want_vectors else None)
        d = norm_tree(Ub - ga)
        if best_s is None:
            best_s = d
            best_gi = np.zeros(d.shape, dtype=np.intp)
        else:
            better = d < best_s
            best_s = np.where(better, d, best_s)
            best_gi = np.where(better, g, best_gi)
    if not want_vectors:
        return best_s, best_gi, None
    diff = np.empty_like(Ua)
    for g in range(k):
        mask = best_gi == g
        if mask.any():
            diff[mask] = Ub[mask] - moved[g][mask]
    ev = np.zeros_like(diff)
    np.divide(diff, best_s[..., None], out=ev, where=best_s[..., None] > 0)
    return best_s, best_gi, ev


def _cell_mean(edge_vals, ndim, ax):
    """Mean over the parallel edges of each cell: average the edge array over
    half-node shifts along every axis except ax."""
    out = edge_vals
    for other in range(ndim):
        if other == ax:
            continue
        sl0 = [slice(None)] * ndim
        sl1 = [slice(None)] * ndim
        sl0[other] = slice(None, -1)
        sl1[other] = slice(1, None)
        out = 0.5 * (out[tuple(sl0)] + out[tuple(sl1)])
    return out


def _cell_scatter(cell_vals, ndim, ax):
    """Adjoint of _cell_mean: spread cell coefficients back onto the edges."""
    out = cell_vals
    for other in range(ndim):
        if other == ax:
            continue
        pad = [(0, 0)] * ndim
        pad[other] = (1, 1)
        p = np.pad(out, pad)
        sl0 = [slice(None)] * ndim
        sl1 = [slice(None)] * ndim
        sl0[other] = slice(None, -1)
        sl1[other] = slice(1, None)
        out = 0.5 * (p[tuple(sl0)] + p[tuple(sl1)])
    return out


def active_cells(inside):
    """Cells whose 2^d corner nodes are all inside the domain."""
    ndim = inside.ndim
    act = inside
    for ax in range(ndim):
        sl0 = [slice(None)] * ndim
        sl1 = [slice(None)] * ndim
        sl0[ax] = slice(None, -1)
        sl1[ax] = slice(1, None)
        act = act[tuple(sl0)] & act[tuple(sl1)]
    return act


def cell_energies(U, inside, group, h, p, b):
    """Per-cell energies and gradient magnitudes.

    Returns (E_cells, t_cells, active): E_cells = h^d phi(t) on active
    cells and 0 elsewhere.
    """
    ndim = U.ndim - 1
    act = active_cells(inside)
    t2 = None
    for ax in range(ndim):
        s, _, _ = _edge_min_dist(U, group, ax, want_vectors=False)
        D = _cell_mean(s, ndim, ax)
        contrib = (D / h) ** 2
        t2 = contrib if t2 is None else t2 + contrib
    t = np.sqrt(t2)
    phi = (t2 + b) ** (p / 2.0) - b ** (p / 2.0)
    E = np.where(act, h**ndim * phi, 0.0)
    return E, np.where(act, t, 0.0), act


def total_energy(U, inside, group, h, p, b):
    E, _, _ = cell_energies(U, inside, group, h, p, b)
    return float(np.sum(E))


def energy_gradient(U, inside, group, h, p, b, delta):
    """Exact gradient of the cell energy with respect to the node vectors.

    Ambient (unprojected) gradient; tangent projection and boundary masking
    are applied by the caller. Also returns the energy.
    """
    ndim = U.ndim - 1
    act = active_cells(inside)

    edges = []
    t2 = None
    for ax in range(ndim):
        s, gi, ev = _edge_min_dist(U, group, ax, want_vectors=True)
        D = _cell_mean(s, ndim, ax)
        contrib = (D / h) ** 2
        t2 = contrib if t2 is None else t2 + contrib
        edges.append((s, gi, ev, D))

    t = np.sqrt(t2)
    phi = (t2 + b) ** (p / 2.0) - b ** (p / 2.0)
    energy = float(np.sum(np.where(act, h**ndim * phi, 0.0)))

    th = np.maximum(t, delta)
    w = p * (th * th + b) ** (p / 2.0 - 1.0)

    grad = np.zeros_like(U)
    # dE/ds_e = sum over active cells of h^(d-2) * w * D * dD/ds_e, and the
    # 1/2^(d-1) edge-averaging weights live inside _cell_scatter already.
    scale = h ** (ndim - 2)
    for ax in range(ndim):
        s, gi, ev, D = edges[ax]
        coef_cells = np.where(act, scale * w * D, 0.0)
        coef_edges = _cell_scatter(coef_cells, ndim, ax)
        contrib = coef_edges[..., None] * ev
        sa, sb = _edge_slices(ndim, ax)
        grad[sb] += contrib
        if group is None or len(group) == 1:
            grad[sa] -= contrib
        else:
            back = np.empty_like(contrib)
            for g in range(len(group)):
                mask = gi == g
                if mask.any():
                    back[mask] = group.apply_inverse(g, contrib[mask])
            grad[sa] -= back
    return grad, energy
