"""Singular-set analysis on the cell grid.

Scaled energy density ρ^{p-d}·E(B_ρ) probes where gradients blow up;
its liminf surrogate is a minimum over dyadic radii. Point defects are
detected by the boundary degree of cells, computed on sphere-valued
lifts by summing signed spherical-triangle areas (exact integer
quantization for resolved cells). Line defects come from the dual
obstruction chain. classify_defects splits high-density cells into a
line part, a quantized point part, and an explicit unclassified rest.
monotonicity_check evaluates the 3D almost-monotonicity identity: the
scaled-energy difference plus a ψ-weighted correction integral against
the normal-derivative mass between two radii.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from . import _kernels
from ._core_np import active_cells
from .elastic import PowerModulus
from .lifting import ResolutionError, lift_region, obstruction_chain
from .manifolds import norm_tree
from .minimizer import _cell_corner_stack, _lift_cell_corners


class UnderResolvedCellError(ValueError):
    """Cell boundary degree too far from an integer to trust."""

    def __init__(self, cell, residual):
        self.cell = tuple(cell)
        self.residual = float(residual)
        super().__init__(
            f"under-resolved cell {self.cell}: boundary-degree rounding "
            f"residual {self.residual:.3f} exceeds 0.1")


def hedgehog_density_constant(p):
    """Analytic scaled density of the radial hedgehog, 2^{p/2} 4π/(3-p)."""
    return 2.0 ** (p / 2.0) * 4.0 * math.pi / (3.0 - p)


def _cell_energy_arrays(field, modulus):
    """(E, t, act): per-cell energies for any admissible modulus."""
    h = field.grid.h
    group = field.target.group
    if isinstance(modulus, PowerModulus):
        return _kernels.cell_energies(field.values, field.inside, group, h,
                                      modulus.p, modulus.b)
    _, t, act = _kernels.cell_energies(field.values, field.inside, group, h,
                                       2.0, 0.0)
    E = np.where(act, h ** field.grid.dims * modulus.phi(t), 0.0)
    return E, t, act


def scaled_density(field, modulus, x0, radii):
    """Profile [(ρ, ρ^{p-d}·E(B_ρ(x0)))] over decreasing radii.

    Cells belong to B_ρ when their centers do. Radii below the 2h grid
    scale or beyond the distance to the domain boundary are rejected.
    The liminf surrogate over a dyadic radius list is the profile's
    minimum value.
    """
    grid = field.grid
    h, d = grid.h, grid.dims
    x0 = np.asarray(x0, dtype=np.float64)
    limit = grid.distance_to_boundary(x0)
    radii = [float(r) for r in radii]
    tiny = 1e-9 * h
    for r in radii:
        if r < 2.0 * h - tiny:
            raise ValueError(f"radius {r} is below the 2h grid scale")
        if r > limit + tiny:
            raise ValueError(f"radius {r} reaches past the domain boundary")
    if any(b > a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be nonincreasing")
    E, _, _ = _cell_energy_arrays(field, modulus)
    dist = norm_tree(grid.cell_centers() - x0)
    p = modulus.p
    return [(r, r ** (p - d) * float(np.sum(E[dist <= r]))) for r in radii]


def dyadic_radii(grid, x0, r_max=None):
    """Dyadic radius list {R0, R0/2, ...} down to the 4h floor."""
    limit = grid.distance_to_boundary(np.asarray(x0, dtype=np.float64))
    r = limit if r_max is None else min(float(r_max), limit)
    floor = 4.0 * grid.h
    out = []
    while r >= floor:
        out.append(r)
        r /= 2.0
    if not out:
        raise ValueError("domain too small for a dyadic radius ladder")
    return out


def density_liminf(field, modulus, x0, r_max=None):
    """Min of the scaled-density profile over dyadic radii (the discrete
    liminf stand-in); returns (value, profile)."""
    profile = scaled_density(field, modulus, x0, dyadic_radii(field.grid,
                                                              x0, r_max))
    return min(v for _, v in profile), profile


def _ball_stencil(dims, cells):
    offs = np.arange(-cells, cells + 1)
    grids = np.meshgrid(*([offs] * dims), indexing="ij")
    rr = sum(g * g for g in grids)
    return (rr <= cells * cells).astype(np.float64)


def singular_set_estimate(field, modulus, theta=None):
    """Cells whose scaled density at radius 2h exceeds theta.

    Default theta is half the analytic hedgehog constant, the smallest
    nonzero density scale among the built-in experiments. Returns
    (cell list, scaled-density array over cells).
    """
    p = modulus.p
    if theta is None:
        theta = 0.5 * hedgehog_density_constant(p)
    if theta <= 0:
        raise ValueError("density threshold must be positive")
    grid = field.grid
    E, _, act = _cell_energy_arrays(field, modulus)
    ball = ndimage.convolve(E, _ball_stencil(grid.dims, 2), mode="constant")
    scaled = (2.0 * grid.h) ** (p - grid.dims) * ball
    hits = act & (scaled > theta)
    cells = [tuple(int(v) for v in ix) for ix in np.argwhere(hits)]
    return cells, scaled


# ------------------------------------------------ boundary degrees ----


def _unit(v):
    return v / np.maximum(norm_tree(v), 1e-300)[..., None]


def _tri_area(a, b, c):
    """Signed spherical-triangle area of unit-vector triples."""
    num = np.sum(a * np.cross(b, c), axis=-1)
    den = 1.0 + np.sum(a * b, axis=-1) + np.sum(b * c, axis=-1) \
        + np.sum(c * a, axis=-1)
    return 2.0 * np.arctan2(num, den)


def _face_sums(V, axis):
    """Spherical-area sums of all grid faces orthogonal to axis.

    Each face is an 8-triangle fan over its 4 corner images, their
    normalized edge midpoints, and the normalized face center; the sign
    convention orients every face's normal along +axis.
    """
    bc = [a for a in range(3) if a != axis]

    def corner(db, dc):
        sl = [slice(None)] * 3
        sl[bc[0]] = slice(1, None) if db else slice(None, -1)
        sl[bc[1]] = slice(1, None) if dc else slice(None, -1)
        return V[tuple(sl)]

    c00, c10, c11, c01 = corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)
    m0 = _unit(c00 + c10)
    m1 = _unit(c10 + c11)
    m2 = _unit(c11 + c01)
    m3 = _unit(c01 + c00)
    f = _unit(c00 + c10 + c11 + c01)
    area = (_tri_area(c00, m0, f) + _tri_area(m0, c10, f)
            + _tri_area(c10, m1, f) + _tri_area(m1, c11, f)
            + _tri_area(c11, m2, f) + _tri_area(m2, c01, f)
            + _tri_area(c01, m3, f) + _tri_area(m3, c00, f))
    # corner listing is ccw in the (b, c) plane; e_b x e_c = -e_1 for axis 1
    return area if axis != 1 else -area


def _degrees_from_lift(V):
    """Boundary degree of every cell of a lifted S2-valued array.

    Face sums are computed once and telescoped, so sub-box charge sums
    equal the sub-box boundary degree by construction.
    """
    deg = None
    for axis in range(3):
        F = _face_sums(V, axis)
        up = [slice(None)] * 3
        lo = [slice(None)] * 3
        up[axis] = slice(1, None)
        lo[axis] = slice(None, -1)
        term = F[tuple(up)] - F[tuple(lo)]
        deg = term if deg is None else deg + term
    return deg / (4.0 * math.pi)


def cell_degree(lifted_values, cell):
    """Boundary degree of one cell: (integer degree, rounding residual).

    Raises UnderResolvedCellError when the residual exceeds 0.1. The
    Jacobian mass convention is (4π/3) per unit degree.
    """
    V = np.asarray(lifted_values, dtype=np.float64)
    if V.ndim != 4 or V.shape[-1] != 3:
        raise ValueError("cell_degree needs a 3D S2-valued array")
    i, j, k = (int(v) for v in cell)
    sub = V[i:i + 2, j:j + 2, k:k + 2]
    if sub.shape[:3] != (2, 2, 2):
        raise ValueError(f"cell {cell} is not interior to the array")
    raw = float(_degrees_from_lift(sub)[0, 0, 0])
    rounded = int(round(raw))
    residual = abs(raw - rounded)
    if residual > 0.1:
        raise UnderResolvedCellError((i, j, k), residual)
    return rounded, residual


def _support_cells(chain, active):
    """Active cells incident to support plaquettes (the line part)."""
    out = set()
    d = chain.grid.dims
    for axes, base, _ in chain.support:
        if d == 2:
            out.add(tuple(base))
            continue
        a3 = ({0, 1, 2} - set(axes)).pop()
        lo = list(base)
        lo[a3] -= 1
        for cell in (tuple(lo), tuple(base)):
            if all(0 <= cell[a] <= chain.grid.n[a] - 2 for a in range(d)) \
                    and active[cell]:
                out.add(cell)
    return sorted(out)


def jacobian_charges(field, strict=True):
    """Cell degrees over sphere-lifted components: list of (cell, degree)
    with nonzero degree, plus a details dict.

    The field's obstruction support blocks its plaquette corners; the
    remaining inside nodes split into edge-connected components, each
    lifted from its first node. Cells whose 8 corners share a component
    get a degree; the rest are line-incident or reported uncomputable.
    strict=False downgrades under-resolved cells and failed component
    lifts from errors to report entries.
    """
    if field.grid.dims != 3 or field.target.ambient_dim != 3:
        raise ValueError("cell degrees need a 3D grid and an S2 cover")
    grid = field.grid
    chain = obstruction_chain(field)
    act = active_cells(field.inside)

    blocked = np.zeros(grid.n, dtype=bool)
    for (a1, a2), base, _ in chain.support:
        for d1 in (0, 1):
            for d2 in (0, 1):
                ix = list(base)
                ix[a1] += d1
                ix[a2] += d2
                blocked[tuple(ix)] = True
    region = field.inside & ~blocked
    labels, ncomp = ndimage.label(
        region, structure=ndimage.generate_binary_structure(3, 1))

    lifted = np.array(field.values, copy=True)
    failed_components = []
    for comp in range(1, ncomp + 1):
        mask = labels == comp
        seed = tuple(int(v) for v in np.argwhere(mask)[0])
        try:
            out = lift_region(field, mask, seed)
        except ResolutionError:
            if strict:
                raise
            failed_components.append(comp)
            continue
        lifted[mask] = out[mask]

    corner_label = np.full(tuple(s - 1 for s in grid.n), -1, dtype=np.intp)
    same = np.ones(corner_label.shape, dtype=bool)
    base_lab = labels[:-1, :-1, :-1]
    for idx in np.ndindex(2, 2, 2):
        sl = tuple(slice(i, s - 1 + i) for i, s in zip(idx, grid.n))
        same &= labels[sl] == base_lab
    computable = act & same & (base_lab > 0)
    for comp in failed_components:
        computable &= base_lab != comp

    raw = _degrees_from_lift(lifted)
    rounded = np.rint(raw).astype(np.int64)
    residual = np.abs(raw - rounded)
    bad = computable & (residual > 0.1)
    under_resolved = [tuple(int(v) for v in ix) for ix in np.argwhere(bad)]
    if under_resolved and strict:
        cell = under_resolved[0]
        raise UnderResolvedCellError(cell, residual[cell])
    computable &= ~bad

    hits = computable & (rounded != 0)
    charges = [(tuple(int(v) for v in ix), int(rounded[tuple(ix)]))
               for ix in np.argwhere(hits)]
    details = {
        "line_cells": _support_cells(chain, act),
        "uncomputable_cells": [tuple(int(v) for v in ix)
                               for ix in np.argwhere(act & ~computable)],
        "under_resolved_cells": under_resolved,
        "residual_max": float(residual[computable].max())
        if computable.any() else 0.0,
        "components": int(ncomp),
        "chain": chain,
    }
    return charges, details


@dataclass
class DefectReport:
    """Line/point split of the detected singular set.

    line_polylines are dual polylines through the obstruction support;
    points carry (cell, center, degree); unclassified lists cells above
    the density threshold that fit neither bucket. profiles maps each
    point cell to its dyadic scaled-density profile.
    """

    theta: float
    line_polylines: list = dc_field(default_factory=list)
    line_cells: list = dc_field(default_factory=list)
    points: list = dc_field(default_factory=list)
    unclassified: list = dc_field(default_factory=list)
    profiles: dict = dc_field(default_factory=dict)
    chain_length: float = 0.0
    metadata: dict = dc_field(default_factory=dict)

    @property
    def is_empty(self):
        return not (self.line_cells or self.points or self.unclassified)


def classify_defects(field, modulus, theta=None):
    """Split density-exceeding cells into line, point, and unclassified.

    Line part: cells pierced by the obstruction chain. Point part:
    lifted-degree carriers off the line with density above theta.
    Everything else above theta is reported unclassified, never
    dropped. Degrees are only computed on 3D S2-cover targets.
    """
    grid = field.grid
    p = modulus.p
    if theta is None:
        theta = 0.5 * hedgehog_density_constant(p)
    dens_cells, scaled = singular_set_estimate(field, modulus, theta)
    act = active_cells(field.inside)

    charges = []
    if grid.dims == 3 and field.target.ambient_dim == 3:
        charges, details = jacobian_charges(field, strict=False)
        chain = details["chain"]
        line_cells = details["line_cells"]
    else:
        chain = obstruction_chain(field)
        line_cells = _support_cells(chain, act)

    line_set = set(line_cells)
    degree_at = dict(charges)
    points = []
    for cell in sorted(degree_at):
        if cell in line_set:
            continue
        if scaled[cell] > theta:
            center = tuple(
                grid.origin[a] + grid.h * (cell[a] + 0.5)
                for a in range(grid.dims))
            points.append({"cell": cell, "center": center,
                           "degree": degree_at[cell]})
    point_set = {pt["cell"] for pt in points}
    assert not (point_set & line_set), "line and point parts overlap"

    unclassified = [c for c in dens_cells
                    if c not in line_set and c not in point_set]

    profiles = {}
    for pt in points:
        try:
            radii = dyadic_radii(grid, pt["center"])
        except ValueError:
            continue
        profiles[pt["cell"]] = scaled_density(field, modulus, pt["center"],
                                              radii)

    report = DefectReport(
        theta=float(theta),
        line_polylines=chain.polylines(act),
        line_cells=list(line_cells),
        points=points,
        unclassified=unclassified,
        profiles=profiles,
        chain_length=chain.length,
        metadata={"density_radius": 2.0 * grid.h,
                  "support_size": len(chain.support)},
    )
    return report


# ------------------------------------------------- monotonicity -------


@dataclass
class MonotonicityResult:
    lhs: float
    rhs: float
    residual: float
    rhs_nonnegative: bool
    psi_correction: float
    psi_bound: float
    profile: list


def monotonicity_check(field, modulus, x0, r, R):
    """Almost-monotonicity identity between radii r < R about x0 (3D).

    LHS = R^{p-3}E(B_R) - r^{p-3}E(B_r) + ∫_r^R ξ^{p-4}(∫_{B_ξ}ψ(|∇u|))dξ,
    RHS = ∫_{B_R \\ B_r} |x-x0|^{p-3} (φ'(t)/t) |∂_ν u|² dx,
    both cell-quadratures; the correction integral is trapezoidal over
    grid-aligned radii. Returns both sides, their difference, the
    correction and its |ψ| <= M bound M·(4π/3)(R^p - r^p)/p.
    """
    grid = field.grid
    if grid.dims != 3:
        raise ValueError("the monotonicity identity is stated on 3D balls")
    h = grid.h
    p = modulus.p
    x0 = np.asarray(x0, dtype=np.float64)
    limit = grid.distance_to_boundary(x0)
    tiny = 1e-9 * h
    if not (2.0 * h - tiny <= r < R <= limit + tiny):
        raise ValueError(
            f"radii must satisfy 2h <= r < R <= dist to boundary "
            f"({2 * h:.4g} <= {r:.4g} < {R:.4g} <= {limit:.4g})")

    E, t, act = _cell_energy_arrays(field, modulus)
    cc = grid.cell_centers()
    dist = norm_tree(cc - x0)

    # mollified ball membership: cells fade in across one cell width, so
    # the quadrature error is smooth in h and refinement fits behave
    def weight(xi):
        x = (xi - dist) / h + 0.5
        x = np.clip(x, 0.0, 1.0)
        return x * x * (3.0 - 2.0 * x)

    psi_cell = np.where(act, h ** 3 * np.asarray(modulus.psi(t)), 0.0)

    def ball(mass, xi):
        return float(np.sum(mass * weight(xi)))

    xs = list(np.arange(r, R, h))
    if not xs or xs[-1] < R:
        xs.append(R)
    xs = np.asarray(xs)
    integrand = np.array([xi ** (p - 4.0) * ball(psi_cell, xi) for xi in xs])
    psi_corr = float(np.trapezoid(integrand, xs))

    lhs = R ** (p - 3.0) * ball(E, R) - r ** (p - 3.0) * ball(E, r) \
        + psi_corr

    # normal-derivative mass over the annulus, from lifted cell diffs
    corners = _cell_corner_stack(field.values, 3)
    lifted = _lift_cell_corners(corners, field.target.group)
    dnu = np.zeros(t.shape + (field.target.ambient_dim,))
    safe = np.maximum(dist, 1e-300)
    for ax in range(3):
        take0 = [slice(None)] * 3
        take1 = [slice(None)] * 3
        take0[ax] = 0
        take1[ax] = 1
        sel0 = (Ellipsis,) + tuple(take0) + (slice(None),)
        sel1 = (Ellipsis,) + tuple(take1) + (slice(None),)
        dv = np.mean(
            lifted[sel1].reshape(lifted.shape[:3] + (-1, lifted.shape[-1]))
            - lifted[sel0].reshape(lifted.shape[:3] + (-1, lifted.shape[-1])),
            axis=3) / h
        nu_ax = (cc[..., ax] - x0[ax]) / safe
        dnu += nu_ax[..., None] * dv
    delta = 1e-8 / h
    th = np.maximum(t, delta)
    w = np.asarray(modulus.dphi(th)) / th
    # same mollified membership for the annulus keeps both sides matched;
    # contributing cells all sit at dist >= r - h/2, so the floor is inert
    ann_w = np.where(act, weight(R) - weight(r), 0.0)
    dfloor = np.maximum(dist, 0.25 * h)
    rhs = float(np.sum(
        ann_w * h ** 3 * dfloor ** (p - 3.0) * w
        * np.sum(dnu * dnu, axis=-1)))

    # profile of the corrected scaled energy over the radius ladder
    profile = []
    run = 0.0
    for i, xi in enumerate(xs):
        if i > 0:
            run += 0.5 * (integrand[i - 1] + integrand[i]) * (xs[i] - xs[i - 1])
        scaled_e = xi ** (p - 3.0) * ball(E, xi)
        profile.append((float(xi), float(scaled_e), float(scaled_e + run)))

    M = modulus.M
    bound = float(M * (4.0 * math.pi / 3.0) * (R ** p - r ** p) / p) \
        if M is not None else float("nan")
    return MonotonicityResult(
        lhs=float(lhs), rhs=rhs, residual=float(lhs - rhs),
        rhs_nonnegative=bool(rhs >= -1e-12),
        psi_correction=psi_corr, psi_bound=bound, profile=profile)
