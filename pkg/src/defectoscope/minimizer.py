"""Projected gradient descent for the constrained elastic energy, a
penalized Q-tensor relaxation of it, and stationarity diagnostics.

The constrained solver moves node representatives on the covering sphere
along the negative tangent gradient, retracts, re-canonicalizes, and
accepts steps under an Armijo test, so the energy trace is nonincreasing
at every accepted step. Boundary-mask nodes are never written; their
bits pass through to the output. All arithmetic is deck-equivariant, so
a global gauge applied to input and boundary propagates to the output
bit-exactly.

The penalized mode relaxes the pointwise constraint: symmetric traceless
3x3 values evolve unconstrained in a 6-component isometric embedding
while a squared-distance potential pulls them toward the embedded
projective plane.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from ._core_np import (_cell_mean, _cell_scatter, _edge_min_dist,
                       _edge_slices, active_cells)
from .elastic import PowerModulus, require_admissible
from .fields import Field, GridSpec
from .manifolds import (canonical, director_of_q, norm_tree,
                        project_to_target, q_tensor, retract,
                        tangent_project)

_STEP_FLOOR = 1e-16


@dataclass
class MinimizeOptions:
    """Stopping and line-search parameters.

    None for max_iters, grad_tol or delta_grad resolves to the
    scale-aware defaults 50*(nodes per axis)^2, 1e-6*h^d and 1e-8/h.
    """

    max_iters: int = None
    grad_tol: float = None
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    step0: float = 1.0
    delta_grad: float = None
    seed: int = 0

    def validate(self):
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.step0 <= 0.0:
            raise ValueError("initial step must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol is not None and self.grad_tol <= 0.0:
            raise ValueError("grad_tol must be positive")
        if self.delta_grad is not None and self.delta_grad < 0.0:
            raise ValueError("delta_grad must be nonnegative")

    def resolved(self, grid):
        self.validate()
        d = grid.dims
        max_iters = self.max_iters
        if max_iters is None:
            max_iters = 50 * max(grid.n) ** 2
        grad_tol = self.grad_tol
        if grad_tol is None:
            grad_tol = 1e-6 * grid.h ** d
        delta = self.delta_grad
        if delta is None:
            delta = 1e-8 / grid.h
        return int(max_iters), float(grad_tol), float(delta)


@dataclass
class PenalizedOptions(MinimizeOptions):
    """MinimizeOptions plus the correlation length of the penalty."""

    epsilon: float = 0.2
    potential: str = "squared-distance"

    def validate(self):
        super().validate()
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.potential != "squared-distance":
            raise ValueError("unknown potential %r" % self.potential)


@dataclass
class MinimizeResult:
    field: object
    energy: float
    grad_norm: float
    iterations: int
    status: str
    trace: list = dc_field(default_factory=list)
    # penalized mode only: the relaxed matrix field and penalty share
    q_values: object = None
    penalty_energy: float = None
    projection_ambiguous: object = None

    @property
    def converged(self):
        return self.status == "converged"


def _power_params(modulus):
    if isinstance(modulus, PowerModulus):
        return modulus.p, modulus.b
    return None


def discrete_energy(field, modulus):
    """Total energy: sum over active cells of h^d * phi(t_cell)."""
    require_admissible(modulus)
    pw = _power_params(modulus)
    if pw is not None:
        return _kernels.total_energy(field.values, field.inside,
                                     field.target.group, field.grid.h,
                                     pw[0], pw[1])
    _, t, act = _kernels.cell_energies(field.values, field.inside,
                                       field.target.group, field.grid.h,
                                       2.0, 0.0)
    return float(np.sum(np.where(act, field.grid.h ** field.grid.dims
                                 * modulus.phi(t), 0.0)))


def _generic_gradient(values, inside, group, h, modulus, delta):
    """Reference-backend gradient for a non-power modulus."""
    ndim = values.ndim - 1
    act = active_cells(inside)
    edges = []
    t2 = None
    for ax in range(ndim):
        s, gi, ev = _edge_min_dist(values, group, ax, want_vectors=True)
        D = _cell_mean(s, ndim, ax)
        contrib = (D / h) ** 2
        t2 = contrib if t2 is None else t2 + contrib
        edges.append((s, gi, ev, D))
    t = np.sqrt(t2)
    energy = float(np.sum(np.where(act, h**ndim * modulus.phi(t), 0.0)))
    th = np.maximum(t, delta)
    w = np.asarray(modulus.dphi(th)) / th
    grad = np.zeros_like(values)
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


def _ambient_gradient(field, modulus, delta):
    pw = _power_params(modulus)
    if pw is not None:
        return _kernels.energy_gradient(field.values, field.inside,
                                        field.target.group, field.grid.h,
                                        pw[0], pw[1], delta)
    return _generic_gradient(field.values, field.inside, field.target.group,
                             field.grid.h, modulus, delta)


def energy_gradient(field, modulus, delta_grad=None):
    """Tangent gradient per node, zero on boundary and exterior nodes.

    Returns (gradient, energy). The weight phi'(t)/t is clamped at
    t = delta_grad (default 1e-8/h) so b = 0 moduli stay finite.
    """
    require_admissible(modulus)
    if delta_grad is None:
        delta_grad = 1e-8 / field.grid.h
    amb, energy = _ambient_gradient(field, modulus, delta_grad)
    grad = tangent_project(field.values, amb)
    grad[~(field.inside & ~field.boundary)] = 0.0
    return grad, energy


def _grad_norm(grad):
    return float(np.sqrt(np.sum(grad * grad)))


def minimize(field, modulus, options=None):
    """Armijo projected gradient descent under the manifold constraint.

    Dirichlet problem: the field must carry a nonempty boundary mask;
    boundary node bits are preserved exactly. Returns a MinimizeResult
    whose status is converged, unconverged (iteration cap) or stalled
    (line-search step underflow); the energy trace is nonincreasing.
    """
    require_admissible(modulus)
    options = options or MinimizeOptions()
    max_iters, grad_tol, delta = options.resolved(field.grid)
    if not field.boundary.any():
        raise ValueError("minimize needs Dirichlet data: empty boundary mask")

    target = field.target
    free = field.inside & ~field.boundary
    U = np.array(field.values, copy=True)
    trace = []
    status = "unconverged"
    step = float(options.step0)
    grad = None
    energy = None
    gnorm = None
    it = 0

    for it in range(max_iters + 1):
        amb, energy = _ambient_gradient(field.with_values(U), modulus, delta)
        grad = tangent_project(U, amb)
        grad[~free] = 0.0
        g2 = float(np.sum(grad * grad))
        gnorm = float(np.sqrt(g2))
        trace.append((it, energy, gnorm, step))
        if gnorm <= grad_tol:
            status = "converged"
            break
        if it == max_iters:
            status = "unconverged"
            break

        # warm start: retry the last accepted step scaled up one notch
        step = min(step / options.backtrack, 1e6 * options.step0)
        accepted = False
        while step >= _STEP_FLOOR:
            V = U.copy()
            V[free] = canonical(retract(U[free], -step * grad[free]), target)
            e_try = discrete_energy(field.with_values(V), modulus)
            if e_try <= energy - options.armijo_c * step * g2:
                U = V
                accepted = True
                break
            step *= options.backtrack
        if not accepted:
            status = "stalled"
            break

    out = field.with_values(U)
    return MinimizeResult(field=out, energy=energy, grad_norm=gnorm,
                          iterations=it, status=status, trace=trace)


# ------------------------------------------------------- penalized ----

_SQRT2 = np.sqrt(2.0)


def q_to_vec(Q):
    """Isometric 6-vector of a symmetric 3x3 field: |vec| = |Q|_F."""
    return np.stack([Q[..., 0, 0], Q[..., 1, 1], Q[..., 2, 2],
                     _SQRT2 * Q[..., 0, 1], _SQRT2 * Q[..., 0, 2],
                     _SQRT2 * Q[..., 1, 2]], axis=-1)


def vec_to_q(v):
    Q = np.empty(v.shape[:-1] + (3, 3))
    Q[..., 0, 0] = v[..., 0]
    Q[..., 1, 1] = v[..., 1]
    Q[..., 2, 2] = v[..., 2]
    Q[..., 0, 1] = Q[..., 1, 0] = v[..., 3] / _SQRT2
    Q[..., 0, 2] = Q[..., 2, 0] = v[..., 4] / _SQRT2
    Q[..., 1, 2] = Q[..., 2, 1] = v[..., 5] / _SQRT2
    return Q


def _remove_trace(vec):
    tr = (vec[..., 0] + vec[..., 1] + vec[..., 2]) / 3.0
    out = vec.copy()
    for c in range(3):
        out[..., c] -= tr
    return out


def _penalty(vec, inside):
    """f(Q) = squared Frobenius distance to the embedded target, and its
    gradient 2(Q - P(Q)) in 6-vector coordinates, zero outside."""
    Q = vec_to_q(vec)
    P, _ = project_to_target(Q)
    dv = vec - q_to_vec(P)
    f = np.sum(dv * dv, axis=-1)
    f = np.where(inside, f, 0.0)
    gf = 2.0 * dv
    gf[~inside] = 0.0
    return f, gf


def minimize_penalized(field, modulus, options=None):
    """Unconstrained descent on elastic energy + eps^-2 penalty.

    Input is a director field with RP2 target; it is embedded through
    the traceless symmetric tensor n x n - I/3 and relaxed off-manifold.
    The result carries the relaxed matrix values (q_values), the final
    penalty share, and the projected director field with its ambiguous
    projection mask.
    """
    require_admissible(modulus)
    options = options or PenalizedOptions()
    if not isinstance(options, PenalizedOptions):
        raise TypeError("minimize_penalized needs PenalizedOptions")
    max_iters, grad_tol, delta = options.resolved(field.grid)
    if field.target.name != "RP2":
        raise ValueError("penalized mode is defined for the RP2 target")
    if not field.boundary.any():
        raise ValueError("minimize needs Dirichlet data: empty boundary mask")

    grid = field.grid
    h, d = grid.h, grid.dims
    inside = field.inside
    free = inside & ~field.boundary
    eps2 = options.epsilon ** 2
    pw = _power_params(modulus)

    V = q_to_vec(q_tensor(field.values))
    cell_hd = h ** d

    def elastic(vec):
        if pw is not None:
            return _kernels.total_energy(vec, inside, None, h, pw[0], pw[1])
        _, t, act = _kernels.cell_energies(vec, inside, None, h, 2.0, 0.0)
        return float(np.sum(np.where(act, cell_hd * modulus.phi(t), 0.0)))

    def total(vec):
        f, _ = _penalty(vec, inside)
        pen = cell_hd / eps2 * float(np.sum(f))
        return elastic(vec) + pen, pen

    trace = []
    status = "unconverged"
    step = float(options.step0)
    energy = None
    gnorm = None
    pen = None
    it = 0
    for it in range(max_iters + 1):
        if pw is not None:
            amb, _ = _kernels.energy_gradient(V, inside, None, h,
                                              pw[0], pw[1], delta)
        else:
            amb, _ = _generic_gradient(V, inside, None, h, modulus, delta)
        f, gf = _penalty(V, inside)
        energy, pen = total(V)
        grad = _remove_trace(amb + cell_hd / eps2 * gf)
        grad[~free] = 0.0
        g2 = float(np.sum(grad * grad))
        gnorm = float(np.sqrt(g2))
        trace.append((it, energy, gnorm, step))
        if gnorm <= grad_tol:
            status = "converged"
            break
        if it == max_iters:
            status = "unconverged"
            break
        step = min(step / options.backtrack, 1e6 * options.step0)
        accepted = False
        while step >= _STEP_FLOOR:
            W = V.copy()
            W[free] = V[free] - step * grad[free]
            e_try, _ = total(W)
            if e_try <= energy - options.armijo_c * step * g2:
                V = W
                accepted = True
                break
            step *= options.backtrack
        if not accepted:
            status = "stalled"
            break

    Q = vec_to_q(V)
    n, ambiguous = director_of_q(Q)
    n = canonical(n, field.target)
    n[~inside] = field.values[~inside]
    out = field.with_values(n)
    return MinimizeResult(field=out, energy=energy, grad_norm=gnorm,
                          iterations=it, status=status, trace=trace,
                          q_values=Q, penalty_energy=pen,
                          projection_ambiguous=ambiguous & inside)


# ---------------------------------------------------- stationarity ----


def _lift_cell_corners(values, group):
    """Per-cell consistent corner representatives, lifted from corner 0.

    values: (..., 2, 2[, 2], m) stacked corner array per cell. Corners
    are aligned to corner (0,...,0) through the distance-minimizing deck
    element; smooth far-field cells resolve this uniquely.
    """
    if group is None or len(group) == 1:
        return values
    d = (values.ndim - 1) // 2
    base = values[(Ellipsis,) + (0,) * d + (slice(None),)]
    out = values.copy()
    # iterate corner multi-indices, aligning each corner to the base
    corner_axes = values.shape[-1 - d:-1]
    it = np.ndindex(*corner_axes)
    for idx in it:
        if not any(idx):
            continue
        sel = (Ellipsis,) + idx + (slice(None),)
        cur = values[sel]
        best_d = None
        best = None
        for g in range(len(group)):
            cand = group.apply(g, cur)
            dist = norm_tree(cand - base)
            if best_d is None:
                best_d, best = dist, cand
            else:
                better = dist < best_d
                best_d = np.where(better, dist, best_d)
                best = np.where(better[..., None], cand, best)
        out[sel] = best
    return out


def _cell_corner_stack(values, ndim):
    """Stack the 2^d corner values of every cell: (*cells, 2,..,2, m)."""
    slices = [slice(None, -1), slice(1, None)]
    parts = []
    for idx in np.ndindex(*([2] * ndim)):
        sl = tuple(slices[i] for i in idx)
        parts.append(values[sl])
    stacked = np.stack(parts, axis=ndim)
    shape = values.shape[:ndim]
    cells = tuple(s - 1 for s in shape)
    return stacked.reshape(cells + (2,) * ndim + (values.shape[-1],))


def _far_mask(grid, loci, radius, on_cells):
    """Mask of cell centers (or nodes) at distance >= radius from loci.

    Point loci use Euclidean distance; line loci (axis-aligned) use the
    distance in the transverse coordinates.
    """
    pts = grid.cell_centers() if on_cells else grid.coords()
    keep = np.ones(pts.shape[:-1], dtype=bool)
    for locus in loci or []:
        pos = np.asarray(locus["point"], dtype=np.float64)
        if locus.get("kind") == "line":
            axes = [a for a in range(grid.dims) if a != locus["axis"]]
            dd = norm_tree(pts[..., axes] - pos)
        else:
            dd = norm_tree(pts - pos)
        keep &= dd >= radius
    return keep


def stationarity_residual(field, modulus, exclusion_radius=None):
    """Discrete L1 norms of the two stationarity systems, far from loci.

    Outer: the tangent part of the energy variation per unit volume
    (the discrete Euler-Lagrange residual; identical discretization to
    the solver's gradient, so minimizer output drives it to tolerance).
    Inner: divergence of the stress phi'(t)/t dv x dv - phi(t) I over
    the cell grid, by central differences.

    Cells and nodes within exclusion_radius (default 3h) of the field's
    generated singular loci are excluded from both norms.
    """
    require_admissible(modulus)
    grid = field.grid
    h, d = grid.h, grid.dims
    if exclusion_radius is None:
        exclusion_radius = 3.0 * h
    delta = 1e-8 / h

    grad, _ = energy_gradient(field, modulus, delta)
    density = grad / h ** d
    node_far = _far_mask(grid, field.singular_loci, exclusion_radius,
                         on_cells=False)
    # residual nodes need a full active cell neighborhood, else the
    # one-sided flux imbalance reads as an O(1/h) density
    act = active_cells(field.inside)
    padded = np.pad(act, 1, constant_values=False)
    full_stencil = np.ones(grid.n, dtype=bool)
    for idx in np.ndindex(*([2] * d)):
        sl = tuple(slice(i, grid.n[ax] + i) for ax, i in enumerate(idx))
        full_stencil &= padded[sl]
    interior = field.inside & ~field.boundary & node_far & full_stencil
    outer = float(np.sum(norm_tree(density[interior])) * h ** d)

    # stress tensor per cell from consistently lifted corner differences
    group = field.target.group
    corners = _cell_corner_stack(field.values, d)
    lifted = _lift_cell_corners(corners, group)
    dvec = []
    for ax in range(d):
        take0 = [slice(None)] * d
        take1 = [slice(None)] * d
        take0[ax] = 0
        take1[ax] = 1
        sel0 = (Ellipsis,) + tuple(take0) + (slice(None),)
        sel1 = (Ellipsis,) + tuple(take1) + (slice(None),)
        diff = np.mean(
            lifted[sel1].reshape(lifted.shape[:d] + (-1, lifted.shape[-1]))
            - lifted[sel0].reshape(lifted.shape[:d] + (-1, lifted.shape[-1])),
            axis=d)
        dvec.append(diff / h)
    t2 = None
    for ax in range(d):
        c = np.sum(dvec[ax] * dvec[ax], axis=-1)
        t2 = c if t2 is None else t2 + c
    t = np.sqrt(t2)
    th = np.maximum(t, delta)
    w = np.asarray(modulus.dphi(th)) / th
    phi = modulus.phi(t)

    T = np.empty(t.shape + (d, d))
    for j in range(d):
        for k_ in range(d):
            T[..., j, k_] = w * np.sum(dvec[j] * dvec[k_], axis=-1)
            if j == k_:
                T[..., j, k_] -= phi

    cell_far = _far_mask(grid, field.singular_loci, exclusion_radius,
                         on_cells=True)
    divT = np.zeros(t.shape + (d,))
    valid = np.ones(t.shape, dtype=bool)
    for j in range(d):
        plus = np.roll(T, -1, axis=j)
        minus = np.roll(T, 1, axis=j)
        divT += (plus[..., j, :] - minus[..., j, :]) / (2.0 * h)
        edge = np.zeros(t.shape, dtype=bool)
        idx0 = [slice(None)] * d
        idx0[j] = 0
        edge[tuple(idx0)] = True
        idx1 = [slice(None)] * d
        idx1[j] = -1
        edge[tuple(idx1)] = True
        valid &= ~edge
        valid &= np.roll(act, -1, axis=j) & np.roll(act, 1, axis=j)
    keep = act & valid & cell_far
    inner = float(np.sum(norm_tree(divT[keep])) * h ** d)
    return outer, inner
