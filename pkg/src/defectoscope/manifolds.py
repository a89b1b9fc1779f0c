"""Quotient targets N = S^q/G: deck groups, distances modulo G, canonical
representatives, the Q-tensor embedding of the projective plane, and the
tangent-space kinematics used by the minimizer.

Deck elements are orthogonal matrices acting on the ambient R^{q+1}. The
built-in groups consist of signed permutations; those are applied by index
shuffling and sign flips, which is exact in floating point, so orbit
distances and canonical representatives are reproducible to the bit.
"""

import numpy as np

__all__ = [
    "DeckGroup",
    "QuotientTarget",
    "target_by_name",
    "BUILTIN_TARGETS",
    "covering_map",
    "orbit",
    "canonical",
    "orbit_distance",
    "q_tensor",
    "project_to_target",
    "tangent_project",
    "retract",
    "random_unit",
    "dot_tree",
    "norm_tree",
]

_UNIT_TOL = 1e-9
_AMBIG_GAP = 1e-10


def dot_tree(a, b):
    """Dot product over the last axis with a fixed pairwise reduction tree.

    The tree ((p0+p1)+p2) for 3 components and ((p0+p1)+(p2+p3)) for 4 is
    invariant under the component permutations of the built-in deck groups,
    which makes orbit distances deck-equivariant to the bit.
    """
    p = np.asarray(a) * np.asarray(b)
    m = p.shape[-1]
    if m == 3:
        return (p[..., 0] + p[..., 1]) + p[..., 2]
    if m == 4:
        return (p[..., 0] + p[..., 1]) + (p[..., 2] + p[..., 3])
    if m == 2:
        return p[..., 0] + p[..., 1]
    # balanced fold for other widths
    terms = [p[..., i] for i in range(m)]
    while len(terms) > 1:
        nxt = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def norm_tree(a):
    """Euclidean norm over the last axis, same reduction tree as dot_tree."""
    return np.sqrt(dot_tree(a, a))


def random_unit(shape, m, rng):
    """Seeded uniform points on S^{m-1}, shape (*shape, m)."""
    v = rng.standard_normal(tuple(shape) + (m,))
    return v / norm_tree(v)[..., None]


def _signed_perm_decompose(mat):
    """Return (perm, signs) if mat is a signed permutation matrix, else None."""
    m = mat.shape[0]
    perm = np.zeros(m, dtype=np.intp)
    signs = np.zeros(m)
    for i in range(m):
        row = mat[i]
        nz = np.nonzero(row)[0]
        if len(nz) != 1 or abs(row[nz[0]]) != 1.0:
            return None
        perm[i] = nz[0]
        signs[i] = row[nz[0]]
    return perm, signs


class DeckGroup:
    """Finite abelian group of orthogonal transformations acting freely on S^q.

    Elements are stored as dense orthogonal matrices; signed permutations are
    additionally applied via an exact shuffle/flip fast path.
    """

    def __init__(self, elements):
        elements = [np.array(g, dtype=np.float64) for g in elements]
        m = elements[0].shape[0]
        for g in elements:
            if g.shape != (m, m):
                raise ValueError("deck elements must share one ambient dimension")
        self.elements = elements
        self.ambient_dim = m
        self._fast = [_signed_perm_decompose(g) for g in elements]

        self.identity_index = None
        for i, g in enumerate(elements):
            if np.array_equal(g, np.eye(m)):
                self.identity_index = i
                break
        if self.identity_index is None:
            raise ValueError("deck group must contain the identity")

        k = len(elements)
        self.compose = np.full((k, k), -1, dtype=np.intp)
        for i in range(k):
            for j in range(k):
                prod = elements[i] @ elements[j]
                for l in range(k):
                    if np.allclose(prod, elements[l], atol=1e-12):
                        self.compose[i, j] = l
                        break
        if (self.compose < 0).any():
            raise ValueError("deck group is not closed under composition")

        self.inverse = np.full(k, -1, dtype=np.intp)
        for i in range(k):
            for j in range(k):
                if self.compose[i, j] == self.identity_index:
                    self.inverse[i] = j
                    break
        if (self.inverse < 0).any():
            raise ValueError("deck group element without inverse")

        if not np.array_equal(self.compose, self.compose.T):
            raise ValueError("deck group must be abelian")

        self._check_free_action()

    def __len__(self):
        return len(self.elements)

    def _check_free_action(self, n_samples=64):
        if len(self.elements) == 1:
            return
        rng = np.random.default_rng(12345)
        x = random_unit((n_samples,), self.ambient_dim, rng)
        for i, g in enumerate(self.elements):
            if i == self.identity_index:
                continue
            d = norm_tree(self.apply(i, x) - x)
            if d.min() <= 1e-9:
                raise ValueError("deck group action is not free")

    def apply(self, index, x):
        """Apply element `index` to vectors in the last axis of x."""
        fast = self._fast[index]
        x = np.asarray(x)
        if fast is not None:
            perm, signs = fast
            return x[..., perm] * signs
        return x @ self.elements[index].T

    def apply_inverse(self, index, x):
        return self.apply(self.inverse[index], x)

    @property
    def separation(self):
        """min over non-identity g of min_{|x|=1} |g(x) - x|.

        For orthogonal g this is the smallest singular value of g - I;
        it bounds from below the chordal gap between distinct lifts along
        any orbit and calibrates the edge-resolution margin.
        """
        if len(self.elements) == 1:
            return np.inf
        vals = []
        m = self.ambient_dim
        for i, g in enumerate(self.elements):
            if i == self.identity_index:
                continue
            vals.append(np.linalg.svd(g - np.eye(m), compute_uv=False).min())
        return float(min(vals))


def _rp2_group():
    return DeckGroup([np.eye(3), -np.eye(3)])


def _s3z4_group():
    # generator (x1,x2,x3,x4) -> (-x2, x1, -x4, x3), cyclic of order 4
    r = np.zeros((4, 4))
    r[0, 1] = -1.0
    r[1, 0] = 1.0
    r[2, 3] = -1.0
    r[3, 2] = 1.0
    return DeckGroup([np.eye(4), r, r @ r, r @ r @ r])


class QuotientTarget:
    """Target manifold N = S^q/G with a named deck group."""

    def __init__(self, name, q, group):
        if q < 2:
            raise ValueError("sphere dimension q must be >= 2")
        if group.ambient_dim != q + 1:
            raise ValueError("deck group ambient dimension must be q + 1")
        if q % 2 == 0 and len(group) > 2:
            # even-dimensional spheres admit only the antipodal quotient
            raise ValueError("for even q the deck group order must be 1 or 2")
        self.name = name
        self.q = q
        self.group = group

    @property
    def ambient_dim(self):
        return self.q + 1

    def __repr__(self):
        return f"QuotientTarget({self.name!r}, q={self.q}, |G|={len(self.group)})"


def _builtin_targets():
    return {
        "RP2": QuotientTarget("RP2", 2, _rp2_group()),
        "S3modZ4": QuotientTarget("S3modZ4", 3, _s3z4_group()),
        "S2": QuotientTarget("S2", 2, DeckGroup([np.eye(3)])),
        "S3": QuotientTarget("S3", 3, DeckGroup([np.eye(4)])),
    }


BUILTIN_TARGETS = _builtin_targets()


def target_by_name(name):
    try:
        return BUILTIN_TARGETS[name]
    except KeyError:
        raise ValueError(
            f"unknown target {name!r}; available: {sorted(BUILTIN_TARGETS)}"
        ) from None


def _check_unit(n, tol=_UNIT_TOL):
    nn = norm_tree(n)
    if np.any(np.abs(nn - 1.0) > tol):
        if np.any(nn < 1e-6):
            raise ValueError("cannot normalize near-zero vector")
        raise ValueError("input vector is not unit length")


def orbit(n, target):
    """Stack of g(n) over all deck elements, shape (|G|, ..., m)."""
    n = np.asarray(n, dtype=np.float64)
    return np.stack([target.group.apply(i, n) for i in range(len(target.group))])


def _lex_greater(a, b):
    """Componentwise lexicographic a > b over the last axis, vectorized."""
    gt = a > b
    eq = a == b
    res = np.zeros(a.shape[:-1], dtype=bool)
    for c in range(a.shape[-1] - 1, -1, -1):
        res = gt[..., c] | (eq[..., c] & res)
    return res


def canonical(n, target):
    """Canonical orbit representative: the lexicographically largest g(n).

    Ties keep the lowest group index, so the choice is deterministic and
    depends only on the orbit, not on the incoming representative.
    """
    cands = orbit(n, target)
    best = cands[0]
    for j in range(1, cands.shape[0]):
        better = _lex_greater(cands[j], best)
        best = np.where(better[..., None], cands[j], best)
    return best


def covering_map(n, target):
    """Map a unit vector to its orbit class, returned as the canonical
    representative. For RP2 the class is also expressible as a Q-tensor
    via q_tensor()."""
    n = np.asarray(n, dtype=np.float64)
    _check_unit(n)
    return canonical(n, target)


def orbit_distance(a, b, target):
    """min over g of |g(a) - b| and a minimizing deck element index.

    Ties break to the lowest group index.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cands = orbit(a, target)
    d = norm_tree(cands - b[None])
    gi = np.argmin(d, axis=0)
    dmin = np.take_along_axis(d, gi[None], axis=0)[0]
    if dmin.ndim == 0:
        return float(dmin), int(gi)
    return dmin, gi


def q_tensor(n):
    """Q = n (x) n - I/3, the symmetric traceless embedding of a director."""
    n = np.asarray(n, dtype=np.float64)
    if n.shape[-1] != 3:
        raise ValueError("q_tensor requires 3-component directors")
    outer = n[..., :, None] * n[..., None, :]
    return outer - np.eye(3) / 3.0


def _eigvec_sign_fix(v):
    """First nonzero component made positive, for reproducible eigenvectors."""
    sign = np.zeros(v.shape[:-1])
    for c in range(v.shape[-1]):
        comp = v[..., c]
        pick = (sign == 0.0) & (comp != 0.0)
        sign = np.where(pick, np.sign(comp), sign)
    sign = np.where(sign == 0.0, 1.0, sign)
    return v * sign[..., None]


def director_of_q(M):
    """Top-eigenvector director(s) of symmetric 3x3 value(s).

    Accepts a single 3x3 matrix or a (..., 3, 3) batch. Returns
    (n1, ambiguous): n1 sign-fixed to the canonical RP2 representative;
    ambiguous flags a top-eigenvalue gap below 1e-10. Full degeneracy
    falls back to the first coordinate axis.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim < 2 or M.shape[-2:] != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    MT = np.swapaxes(M, -1, -2)
    if np.abs(M - MT).max() > 1e-9:
        raise ValueError("matrix is not symmetric")
    S = 0.5 * (M + MT)
    w, V = np.linalg.eigh(S)
    gap = w[..., 2] - w[..., 1]
    ambiguous = gap < _AMBIG_GAP
    n1 = _eigvec_sign_fix(V[..., :, 2])
    full = w[..., 2] - w[..., 0] < _AMBIG_GAP
    if np.any(full):
        e0 = np.zeros(3)
        e0[0] = 1.0
        n1 = np.where(full[..., None], e0, n1)
    if M.ndim == 2:
        return n1, bool(ambiguous)
    return n1, ambiguous


def project_to_target(M):
    """Frobenius-nearest point(s) of the embedded projective plane.

    Returns (Q, ambiguous) with Q = n1 (x) n1 - I/3 built from the
    director_of_q eigenvector; see there for the tie-break rules.
    """
    n1, ambiguous = director_of_q(M)
    return q_tensor(n1), ambiguous


def tangent_project(n, w):
    """Project ambient vector(s) w to the tangent space of S^q at n."""
    n = np.asarray(n, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return w - dot_tree(w, n)[..., None] * n


def retract(n, w):
    """Move from n by w and renormalize: (n + w)/|n + w|."""
    n = np.asarray(n, dtype=np.float64)
    s = n + w
    ns = norm_tree(s)
    if np.any(ns < 1e-9):
        raise ValueError("retraction step reaches the cut point")
    return s / ns[..., None]
