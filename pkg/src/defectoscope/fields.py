"""Grid specifications, director-field containers, Dirichlet boundary
handling, the homogeneous extension initializer, and analytic test-field
generators (hedgehog, vortices, disclinations, dipole chains).

Generators with a singular locus sample the analytic formula at a half-node
offset so the locus always falls at a cell center, never on a node.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .manifolds import canonical, norm_tree, random_unit, retract, tangent_project

__all__ = [
    "GridSpec",
    "Field",
    "BoundaryData",
    "generate",
    "homogeneous_extension",
    "restrict_boundary",
    "perturb",
    "smooth_random",
]

GENERATOR_KINDS = (
    "constant",
    "random",
    "hedgehog",
    "vortex2d",
    "vortex-line-3d",
    "disclination",
    "dipole-chain",
)


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid over a box or a ball (inscribed sphere) domain."""

    n: tuple
    h: float
    origin: tuple
    shape: str = "box"

    def __post_init__(self):
        if len(self.n) not in (2, 3):
            raise ValueError("grids must be 2D or 3D")
        if any(int(k) < 8 for k in self.n):
            raise ValueError("grids need at least 8 nodes per axis")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.shape not in ("box", "ball"):
            raise ValueError("domain shape must be 'box' or 'ball'")
        if len(self.origin) != len(self.n):
            raise ValueError("origin dimension must match n")
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def cube(cls, nodes, dims=3, shape="box"):
        """Grid over [-1, 1]^dims with `nodes` nodes per axis."""
        h = 2.0 / (nodes - 1)
        return cls(n=(nodes,) * dims, h=h, origin=(-1.0,) * dims, shape=shape)

    @property
    def dims(self):
        return len(self.n)

    @property
    def center(self):
        return tuple(
            o + self.h * (k - 1) / 2.0 for o, k in zip(self.origin, self.n)
        )

    @property
    def ball_radius(self):
        return min(self.h * (k - 1) / 2.0 for k in self.n)

    def axis_coords(self, ax):
        return self.origin[ax] + self.h * np.arange(self.n[ax])

    def coords(self):
        """Node coordinates, shape (*n, dims)."""
        axes = [self.axis_coords(ax) for ax in range(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def cell_centers(self):
        """Cell center coordinates, shape (*(n-1), dims)."""
        axes = [self.axis_coords(ax)[:-1] + self.h / 2.0 for ax in range(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def inside_mask(self):
        if self.shape == "box":
            return np.ones(self.n, dtype=bool)
        x = self.coords() - np.asarray(self.center)
        r = np.sqrt(np.sum(x * x, axis=-1))
        return r <= self.ball_radius + 1e-9 * self.h

    def boundary_mask(self):
        """In-domain nodes on the domain boundary: box hull nodes, or ball
        nodes with an axis neighbor outside the domain or the grid."""
        inside = self.inside_mask()
        if self.shape == "box":
            bd = np.zeros(self.n, dtype=bool)
            for ax in range(self.dims):
                sl0 = [slice(None)] * self.dims
                sl0[ax] = 0
                bd[tuple(sl0)] = True
                sl0[ax] = self.n[ax] - 1
                bd[tuple(sl0)] = True
            return bd
        padded = np.pad(inside, 1, constant_values=False)
        has_outside_neighbor = np.zeros(self.n, dtype=bool)
        core = tuple(slice(1, -1) for _ in range(self.dims))
        for ax in range(self.dims):
            for off in (-1, 1):
                has_outside_neighbor |= ~np.roll(padded, off, axis=ax)[core]
        bd = inside & has_outside_neighbor
        if not bd.any():
            raise ValueError("ball domain has an empty boundary layer")
        return bd

    def distance_to_boundary(self, x0):
        """Distance from an interior point to the domain boundary."""
        x0 = np.asarray(x0, dtype=np.float64)
        if self.shape == "ball":
            return self.ball_radius - float(
                np.linalg.norm(x0 - np.asarray(self.center))
            )
        lo = np.asarray(self.origin)
        hi = lo + self.h * (np.asarray(self.n) - 1)
        return float(min((x0 - lo).min(), (hi - x0).min()))


class Field:
    """Per-node orbit representatives on a grid, with a Dirichlet mask."""

    def __init__(self, grid, target, values, singular_loci=None):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != grid.n + (target.ambient_dim,):
            raise ValueError(
                f"values shape {values.shape} does not match grid {grid.n} "
                f"and ambient dimension {target.ambient_dim}"
            )
        self.grid = grid
        self.target = target
        self.values = values
        self.inside = grid.inside_mask()
        self.boundary = grid.boundary_mask()
        self.free = self.inside & ~self.boundary
        self.singular_loci = list(singular_loci or [])

    def copy(self):
        out = Field(self.grid, self.target, self.values.copy(),
                    self.singular_loci)
        return out

    def with_values(self, values):
        """Same grid, target and loci metadata; new node values."""
        return Field(self.grid, self.target, values, self.singular_loci)

    def canonicalize(self):
        """Replace every stored vector by its canonical orbit representative."""
        self.values = np.ascontiguousarray(canonical(self.values, self.target))
        return self

    def check_invariants(self, tol=1e-9):
        norms = norm_tree(self.values)
        if np.abs(norms - 1.0).max() > tol:
            raise ValueError("field contains non-unit vectors")
        if not np.array_equal(self.values, canonical(self.values, self.target)):
            raise ValueError("field is not in canonical representative form")
        return True


@dataclass
class BoundaryData:
    """Values on the boundary nodes of a grid (the discrete trace)."""

    grid: GridSpec
    target: object
    mask: np.ndarray
    values: np.ndarray  # full-shape array; meaningful on mask only


def _fill_value(m):
    e = np.zeros(m)
    e[0] = 1.0
    return e


def _singular_anchor(grid, axes):
    """Half-node offset locus: for each axis in `axes`, the coordinate
    h/2 below the in-domain node nearest the domain center."""
    out = {}
    for ax in axes:
        x = grid.axis_coords(ax)
        c = grid.center[ax]
        ia = int(np.argmin(np.abs(x - c)))
        out[ax] = x[ia] - grid.h / 2.0
    return out


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def generate(kind, grid, target, seed=0, value=None, k=0.5, n_pairs=1,
             support=None):
    """Build an analytic test field on a grid.

    kind: one of constant, random, hedgehog, vortex2d, vortex-line-3d,
    disclination (k = +-1/2), dipole-chain (n_pairs localized dipoles).
    Deterministic given (kind, params, grid, seed).
    """
    if kind not in GENERATOR_KINDS:
        raise ValueError(f"unknown generator kind {kind!r}")
    m = target.ambient_dim
    d = grid.dims
    shp = grid.n

    loci = []
    if kind == "constant":
        v = np.zeros(m) if value is None else np.asarray(value, dtype=np.float64)
        if value is None:
            v[m - 1] = 1.0
        v = v / np.linalg.norm(v)
        U = np.broadcast_to(v, shp + (m,)).copy()

    elif kind == "random":
        rng = np.random.default_rng(seed)
        U = random_unit(shp, m, rng)

    elif kind == "hedgehog":
        if d != 3 or m != 3:
            raise ValueError("hedgehog needs a 3D grid and a 3-component target")
        anc = _singular_anchor(grid, (0, 1, 2))
        X = grid.coords() - np.array([anc[0], anc[1], anc[2]])
        R = np.sqrt(np.sum(X * X, axis=-1))
        assert R.min() > grid.h / 4.0, "singular locus fell on a node"
        U = X / R[..., None]
        loci.append({"kind": "point", "point": (anc[0], anc[1], anc[2])})

    elif kind == "vortex2d":
        if d != 2 or m != 3:
            raise ValueError("vortex2d needs a 2D grid and a 3-component target")
        anc = _singular_anchor(grid, (0, 1))
        X = grid.coords() - np.array([anc[0], anc[1]])
        R = np.sqrt(np.sum(X * X, axis=-1))
        assert R.min() > grid.h / 4.0, "singular locus fell on a node"
        U = np.zeros(shp + (3,))
        U[..., 0] = X[..., 0] / R
        U[..., 1] = X[..., 1] / R
        loci.append({"kind": "point", "point": (anc[0], anc[1])})

    elif kind == "vortex-line-3d":
        if d != 3 or m != 3:
            raise ValueError("vortex-line-3d needs a 3D grid, 3-component target")
        anc = _singular_anchor(grid, (0, 1))
        X = grid.coords()
        xe = X[..., 0] - anc[0]
        ye = X[..., 1] - anc[1]
        R = np.hypot(xe, ye)
        assert R.min() > grid.h / 4.0, "singular locus fell on a node"
        U = np.zeros(shp + (3,))
        U[..., 0] = xe / R
        U[..., 1] = ye / R
        loci.append({"kind": "line", "point": (anc[0], anc[1]), "axis": 2})

    elif kind == "disclination":
        if k not in (0.5, -0.5):
            raise ValueError("disclination index k must be +1/2 or -1/2")
        if len(target.group) < 2:
            raise ValueError(
                "half-integer disclinations need a two-sheeted target (RP2)"
            )
        if m != 3:
            raise ValueError("disclination needs a 3-component target")
        anc = _singular_anchor(grid, (0, 1))
        X = grid.coords()
        xe = X[..., 0] - anc[0]
        ye = X[..., 1] - anc[1]
        R = np.hypot(xe, ye)
        assert R.min() > grid.h / 4.0, "singular locus fell on a node"
        theta = np.arctan2(ye, xe)
        U = np.zeros(shp + (3,))
        U[..., 0] = np.cos(k * theta)
        U[..., 1] = np.sin(k * theta)
        if d == 2:
            loci.append({"kind": "point", "point": (anc[0], anc[1])})
        else:
            loci.append({"kind": "line", "point": (anc[0], anc[1]), "axis": 2})

    elif kind == "dipole-chain":
        U, loci = _dipole_chain(grid, target, int(n_pairs), support)

    field = Field(grid, target, U, singular_loci=loci)
    field.values[~field.inside] = _fill_value(m)
    field.canonicalize()
    return field


def _snap_to_cell_center(grid, ax, x):
    c = grid.axis_coords(ax)[:-1] + grid.h / 2.0
    return float(c[int(np.argmin(np.abs(c - x)))])


def _dipole_chain(grid, target, n_pairs, support):
    """Chain of localized dipole pairs on a north-pole background.

    Pair j sits at height y_j, with charges at Q_j and P_j = Q_j +
    (2^{-j} pi, 0, 0). Inside a capsule of radius a around the segment
    the background is rotated about the transverse azimuth direction by
    the angle difference subtended at the two charges, smoothly windowed
    to the capsule. The map is smooth away from the charge points and
    its polar angle stays below pi/2 on the node rings nearest the axis
    right up to the endpoint planes, so the discrete degrees +1 at P_j
    and -1 at Q_j land in the exact cells containing the charges.
    """
    if grid.dims != 3 or target.ambient_dim != 3:
        raise ValueError("dipole-chain needs a 3D grid and 3-component target")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    a = 3.0 * grid.h if support is None else float(support)

    spread = 0.4
    X = grid.coords()
    U = np.zeros(grid.n + (3,))
    U[..., 2] = 1.0

    loci = []
    placements = []
    for j in range(1, n_pairs + 1):
        L = np.pi * 2.0 ** (-j)
        yj = _snap_to_cell_center(grid, 1, (j - (n_pairs + 1) / 2.0) * spread)
        zj = _snap_to_cell_center(grid, 2, 0.0)
        qx = _snap_to_cell_center(grid, 0, -L / 2.0)
        px = qx + L
        placements.append((j, qx, px, yj, zj, L))

    # disjoint supports: tubes must not overlap or leave the domain
    for idx, (j, qx, px, yj, zj, L) in enumerate(placements):
        lo = np.asarray(grid.origin)
        hi = lo + grid.h * (np.asarray(grid.n) - 1)
        if (qx - a < lo[0] or px + a > hi[0]
                or yj - a < lo[1] or yj + a > hi[1]
                or zj - a < lo[2] or zj + a > hi[2]):
            raise ValueError(f"dipole pair {j} leaves the domain")
        for j2, qx2, px2, yj2, zj2, L2 in placements[:idx]:
            if abs(yj - yj2) < 2.0 * a and not (px + a < qx2 or px2 + a < qx):
                raise ValueError(
                    f"dipole supports of pairs {j} and {j2} overlap"
                )

    for j, qx, px, yj, zj, L in placements:
        wy = X[..., 1] - yj
        wz = X[..., 2] - zj
        wn = np.hypot(wy, wz)
        beta_p = np.arctan2(wn, X[..., 0] - px)
        beta_q = np.arctan2(wn, X[..., 0] - qx)
        # capsule window: 1 within a/2 of the segment, 0 beyond a
        dseg = np.hypot(X[..., 0] - np.clip(X[..., 0], qx, px), wn)
        chi = _smoothstep(np.clip((a - dseg) / (0.5 * a), 0.0, 1.0))
        if not (chi > 0).any():
            raise ValueError(f"dipole pair {j} is unresolved at this grid")
        theta = (beta_p - beta_q) * chi
        phi_az = np.arctan2(wz, wy)
        # Rodrigues rotation of U about k = (-sin phi, cos phi, 0),
        # which carries e3 toward (cos phi, sin phi, 0) as theta grows
        k = np.stack([-np.sin(phi_az), np.cos(phi_az), np.zeros_like(wn)],
                     axis=-1)
        ct = np.cos(theta)[..., None]
        st = np.sin(theta)[..., None]
        kdu = np.sum(k * U, axis=-1)[..., None]
        U = U * ct + np.cross(k, U) * st + k * kdu * (1.0 - ct)
        loci.append({"kind": "point", "point": (px, yj, zj), "degree": 1})
        loci.append({"kind": "point", "point": (qx, yj, zj), "degree": -1})

    U = U / np.sqrt(np.sum(U * U, axis=-1))[..., None]
    return U, loci


def homogeneous_extension(boundary, grid=None, target=None):
    """Extend boundary data radially into a ball grid: each interior node
    takes the value of the boundary node nearest in angle from the center.

    Accepts a Field (its boundary trace is used) or BoundaryData.
    """
    if isinstance(boundary, Field):
        bd = restrict_boundary(boundary)
    else:
        bd = boundary
    grid = bd.grid if grid is None else grid
    target = bd.target if target is None else target
    if grid.shape != "ball":
        raise ValueError("homogeneous extension needs a ball domain")

    inside = grid.inside_mask()
    bmask = bd.mask
    X = grid.coords()
    c = np.asarray(grid.center)

    bpos = X[bmask] - c
    bdir = bpos / np.linalg.norm(bpos, axis=-1, keepdims=True)
    bvals = bd.values[bmask]
    tree = cKDTree(bdir)

    values = np.empty(grid.n + (target.ambient_dim,))
    values[...] = _fill_value(target.ambient_dim)
    interior = inside & ~bmask
    ipos = X[interior] - c
    inorm = np.linalg.norm(ipos, axis=-1)
    central = inorm < 1e-12
    idir = np.where(central[:, None], 1.0, ipos) / np.where(
        central[:, None], 1.0, inorm[:, None]
    )
    _, nearest = tree.query(idir)
    ivals = bvals[nearest]
    # nodes at the exact center get a deterministic boundary value
    ivals[central] = bvals[0]
    values[interior] = ivals
    values[bmask] = bvals

    out = Field(grid, target, values)
    out.canonicalize()
    return out


def restrict_boundary(field):
    """The discrete trace: values on the boundary-mask nodes."""
    return BoundaryData(
        grid=field.grid,
        target=field.target,
        mask=field.boundary.copy(),
        values=field.values.copy(),
    )


def perturb(field, amplitude, seed=0):
    """Seeded tangent perturbation of the free nodes, boundary untouched.

    Used to break symmetry when the initial field is an exact saddle of the
    energy (a planar vortex stays planar under the exact gradient).
    """
    rng = np.random.default_rng(seed)
    out = field.copy()
    noise = amplitude * rng.standard_normal(out.values.shape)
    w = tangent_project(out.values, noise)
    moved = retract(out.values, w)
    out.values = np.ascontiguousarray(
        np.where(field.free[..., None], moved, out.values)
    )
    out.canonicalize()
    return out


def smooth_random(grid, target, seed=0, amplitude=0.4):
    """Seeded smooth unit-vector field: a random constant direction plus a
    few low-frequency sinusoidal modes, normalized. Edge increments stay
    well below the deck separation, so all edges resolve."""
    rng = np.random.default_rng(seed)
    m = target.ambient_dim
    base = random_unit((), m, rng)
    X = grid.coords()
    span = grid.h * (np.asarray(grid.n) - 1)
    Z = (X - np.asarray(grid.origin)) / span  # normalized [0,1] coords
    v = np.broadcast_to(base, grid.n + (m,)).copy()
    for _ in range(3):
        kvec = rng.integers(-2, 3, size=grid.dims)
        phase = rng.uniform(0, 2 * np.pi)
        direction = random_unit((), m, rng)
        wave = np.cos(2 * np.pi * (Z @ kvec) + phase)
        v = v + amplitude / 3.0 * wave[..., None] * direction
    v = v / norm_tree(v)[..., None]
    out = Field(grid, target, v)
    out.values[~out.inside] = _fill_value(m)
    out.canonicalize()
    return out
