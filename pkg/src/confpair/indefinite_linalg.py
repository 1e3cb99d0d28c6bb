"""Exact-tolerance linear algebra over real spaces with indefinite inner products.

Every subspace returned by this module carries a certified basis, meaning
columns that are orthonormal for the standard (definite) dot product on
coordinates; geometry w.r.t. the possibly indefinite ambient product is
recovered through Gram matrices.  All rank decisions share one knob: singular
values (or eigenvalues) below ``tol`` times the largest magnitude count as
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateSubspace

DEFAULT_TOL = 1e-9


# ---------------------------------------------------------------------------
# numerical kernels
# ---------------------------------------------------------------------------


def orthonormal_columns(vectors: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (dot product) of the column span of `vectors`."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2:
        raise ValueError("expected a matrix of column vectors")
    m = vectors.shape[0]
    if vectors.shape[1] == 0:
        return np.zeros((m, 0))
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        return np.zeros((m, 0))
    rank = int(np.sum(s > tol * s[0]))
    return u[:, :rank]


def kernel(matrix: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the right null space of `matrix` (rows x cols)."""
    matrix = np.asarray(matrix, dtype=float)
    ncols = matrix.shape[1]
    if matrix.shape[0] == 0 or ncols == 0:
        return np.eye(ncols)
    _, s, vt = np.linalg.svd(matrix, full_matrices=True)
    if s.size == 0 or s[0] <= 0:
        return np.eye(ncols)
    rank = int(np.sum(s > tol * s[0]))
    return vt[rank:].T


def numerical_rank(matrix: np.ndarray, tol: float = DEFAULT_TOL) -> int:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def eig_signature(gram: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[int, int, int, bool]:
    """(positive, negative, null, marginal) inertia of a symmetric matrix.

    `marginal` is set when some eigenvalue sits within a factor of ten of the
    zero threshold, i.e. the classification should not be trusted blindly.
    """
    gram = np.asarray(gram, dtype=float)
    k = gram.shape[0]
    if k == 0:
        return 0, 0, 0, False
    vals = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    # bases are kept dot-orthonormal and metrics have unit entries, so the
    # eigenvalue scale is bounded by one: flooring the scale keeps pure
    # roundoff from being classified as a definite direction
    scale = max(float(np.max(np.abs(vals))), 1.0)
    thr = tol * scale
    pos = int(np.sum(vals > thr))
    neg = int(np.sum(vals < -thr))
    null = k - pos - neg
    marginal = bool(np.any((np.abs(vals) > 0.1 * thr) & (np.abs(vals) < 10.0 * thr)))
    return pos, neg, null, marginal


# ---------------------------------------------------------------------------
# scalar products
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarProduct:
    """A flat inner product on R^dim given by a diagonal +-1 signature.

    When ``pseudo_pair`` is set the first two basis vectors are a null pair
    with <e0,e0> = <e1,e1> = 0 and <e0,e1> = 1 (the light-cone convention);
    the remaining vectors stay orthonormal.  The stored signature always
    lists the diagonalized eigenvalue signs, so the pair contributes (-1, +1).
    """

    dim: int
    signature: tuple[int, ...]
    pseudo_pair: bool = False

    def __post_init__(self):
        if len(self.signature) != self.dim:
            raise ValueError("signature length must equal dim")
        if any(s not in (-1, 1) for s in self.signature):
            raise ValueError("signature entries must be +-1")
        if self.pseudo_pair:
            if self.dim < 2 or self.signature[0] != -1 or self.signature[1] != 1:
                raise ValueError("pseudo pair requires signature starting (-1, +1)")

    @property
    def index(self) -> int:
        return sum(1 for s in self.signature if s == -1)

    @cached_property
    def gram(self) -> np.ndarray:
        if not self.pseudo_pair:
            return np.diag(np.asarray(self.signature, dtype=float))
        g = np.zeros((self.dim, self.dim))
        g[0, 1] = g[1, 0] = 1.0
        for i in range(2, self.dim):
            g[i, i] = float(self.signature[i])
        return g

    # factories ---------------------------------------------------------

    @staticmethod
    def euclidean(dim: int) -> "ScalarProduct":
        return ScalarProduct(dim, (1,) * dim)

    @staticmethod
    def from_pattern(pattern) -> "ScalarProduct":
        pattern = tuple(int(s) for s in pattern)
        return ScalarProduct(len(pattern), pattern)

    @staticmethod
    def lorentz(dim: int) -> "ScalarProduct":
        return ScalarProduct(dim, (-1,) + (1,) * (dim - 1))

    @staticmethod
    def lightcone(n_euclidean: int) -> "ScalarProduct":
        """Ambient of the light-cone model over R^n: dim n+2, index 1, null pair."""
        return ScalarProduct(n_euclidean + 2, (-1,) + (1,) * (n_euclidean + 1), pseudo_pair=True)

    def opposite(self) -> "ScalarProduct":
        if self.pseudo_pair:
            raise ValueError("cannot negate a pseudo-pair product in place")
        return ScalarProduct(self.dim, tuple(-s for s in self.signature))

    def direct_sum_with_opposite(self, other: "ScalarProduct") -> "ScalarProduct":
        """Product on V (+) W with <.,.> = <.,.>_V - <.,.>_W (diagonal factors only)."""
        if self.pseudo_pair or other.pseudo_pair:
            raise ValueError("direct sums only supported for diagonal products")
        return ScalarProduct(
            self.dim + other.dim, self.signature + tuple(-s for s in other.signature)
        )

    # pairings ------------------------------------------------------------

    def inner(self, u: np.ndarray, v: np.ndarray):
        """<u, v>; broadcasts over leading axes (vectors on the last axis)."""
        return np.einsum("...i,ij,...j->...", np.asarray(u, float), self.gram, np.asarray(v, float))

    def pairings(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix of pairings a_i . b_j for columns of a and b."""
        return np.asarray(a, float).T @ self.gram @ np.asarray(b, float)

    def gram_of(self, basis: np.ndarray) -> np.ndarray:
        return self.pairings(basis, basis)

    def norm_sq(self, u: np.ndarray):
        return self.inner(u, u)


# ---------------------------------------------------------------------------
# subspaces
# ---------------------------------------------------------------------------


@dataclass
class Subspace:
    """A subspace of an ambient inner-product space with a certified basis."""

    ambient: ScalarProduct
    basis: np.ndarray  # (dim, rank), dot-orthonormal columns
    tol: float = field(default=DEFAULT_TOL, repr=False)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.ambient.dim

    @staticmethod
    def from_spanning(ambient: ScalarProduct, vectors: np.ndarray, tol: float = DEFAULT_TOL) -> "Subspace":
        return Subspace(ambient, orthonormal_columns(vectors, tol), tol)

    @staticmethod
    def zero(ambient: ScalarProduct, tol: float = DEFAULT_TOL) -> "Subspace":
        return Subspace(ambient, np.zeros((ambient.dim, 0)), tol)

    @staticmethod
    def full(ambient: ScalarProduct, tol: float = DEFAULT_TOL) -> "Subspace":
        return Subspace(ambient, np.eye(ambient.dim), tol)

    # predicates ---------------------------------------------------------

    def gram(self) -> np.ndarray:
        return self.ambient.gram_of(self.basis)

    def signature(self, tol: float | None = None) -> tuple[int, int, int]:
        pos, neg, null, _ = eig_signature(self.gram(), tol or self.tol)
        return pos, neg, null

    def signature_flagged(self, tol: float | None = None) -> tuple[int, int, int, bool]:
        return eig_signature(self.gram(), tol or self.tol)

    def is_nondegenerate(self, tol: float | None = None) -> bool:
        return self.signature(tol)[2] == 0

    def contains(self, v: np.ndarray, tol: float | None = None) -> bool:
        return self.membership_residual(v) <= (tol or self.tol) * max(1.0, float(np.linalg.norm(v)))

    def membership_residual(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        proj = self.basis @ (self.basis.T @ v)
        return float(np.linalg.norm(v - proj))

    def euclidean_projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    # constructions ------------------------------------------------------

    def orthogonal_complement(self, within: "Subspace | None" = None) -> "Subspace":
        """Vectors orthogonal (ambient product) to self, optionally inside `within`."""
        if within is None:
            rows = (self.ambient.gram @ self.basis).T  # <v, b_i> = 0
            return Subspace(self.ambient, kernel(rows, self.tol), self.tol)
        rows = self.ambient.pairings(self.basis, within.basis)  # constraints on coefficients
        coeffs = kernel(rows, self.tol)
        return Subspace.from_spanning(self.ambient, within.basis @ coeffs, self.tol)


def span_of_image(beta: "BilinearSample") -> Subspace:
    """Subspace of the target spanned by all values of a bilinear form."""
    vals = beta.values.reshape(-1, beta.target.dim).T
    return Subspace.from_spanning(beta.target, vals, beta.tol)


def nullity_space(
    beta: "BilinearSample",
    t_sub: Subspace | None = None,
    left: ScalarProduct | None = None,
) -> Subspace:
    """Left vectors X with <beta(X, Y), xi> = 0 for all Y and xi in `t_sub`.

    With ``t_sub=None`` the plain nullity {X : beta(X, .) = 0} is returned.
    Valid for degenerate `t_sub` since only pairings are used, never a
    projection.
    """
    vals = beta.values  # (L, R, m)
    if t_sub is None:
        rows = vals.reshape(vals.shape[0], -1).T
    else:
        paired = np.einsum("lrm,mt->lrt", vals, beta.target.gram @ t_sub.basis)
        rows = paired.reshape(vals.shape[0], -1).T
    amb = left if left is not None else ScalarProduct.euclidean(vals.shape[0])
    return Subspace(amb, kernel(rows, beta.tol), beta.tol)


def radical(u_sub: Subspace) -> Subspace:
    """u ^ u-perp: the kernel of the Gram matrix of the subspace."""
    g = u_sub.gram()
    coeffs = kernel(g, u_sub.tol)
    return Subspace.from_spanning(u_sub.ambient, u_sub.basis @ coeffs, u_sub.tol)


def orthogonal_projection(t_sub: Subspace, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of v onto a nondegenerate subspace."""
    g = t_sub.gram()
    if t_sub.rank == 0:
        return np.zeros_like(np.asarray(v, dtype=float))
    pos, neg, null, _ = eig_signature(g, t_sub.tol)
    if null > 0:
        raise DegenerateSubspace(
            f"projection target has radical of dimension {null}"
        )
    v = np.asarray(v, dtype=float)
    rhs = t_sub.basis.T @ (t_sub.ambient.gram @ v)
    coeff = np.linalg.solve(g, rhs)
    return t_sub.basis @ coeff


def projection_matrix(t_sub: Subspace) -> np.ndarray:
    """Matrix of the orthogonal projection onto a nondegenerate subspace."""
    if t_sub.rank == 0:
        return np.zeros((t_sub.dim, t_sub.dim))
    g = t_sub.gram()
    pos, neg, null, _ = eig_signature(g, t_sub.tol)
    if null > 0:
        raise DegenerateSubspace("projection target has a nonzero radical")
    return t_sub.basis @ np.linalg.solve(g, t_sub.basis.T @ t_sub.ambient.gram)


def intersect(u_sub: Subspace, v_sub: Subspace) -> Subspace:
    """Intersection via the kernel of the concatenated annihilator system."""
    if u_sub.ambient.dim != v_sub.ambient.dim:
        raise ValueError("subspaces live in different ambients")
    tol = min(u_sub.tol, v_sub.tol)
    dim = u_sub.dim
    ann_u = kernel(u_sub.basis.T, tol)  # dot-complement of U
    ann_v = kernel(v_sub.basis.T, tol)
    rows = np.vstack([ann_u.T, ann_v.T]) if (ann_u.size or ann_v.size) else np.zeros((0, dim))
    return Subspace(u_sub.ambient, kernel(rows, tol), tol)


def subspace_distance(u_sub: Subspace, v_sub: Subspace) -> float:
    """Spectral distance of the dot-orthogonal projectors (1 for a rank gap)."""
    pu = u_sub.euclidean_projector()
    pv = v_sub.euclidean_projector()
    if pu.size == 0 and pv.size == 0:
        return 0.0
    return float(np.linalg.norm(pu - pv, ord=2))


# ---------------------------------------------------------------------------
# sampled bilinear forms
# ---------------------------------------------------------------------------


@dataclass
class BilinearSample:
    """A bilinear form sampled on bases: values[l, r] is a target vector."""

    target: ScalarProduct
    values: np.ndarray  # (left_dim, right_dim, target_dim)
    symmetric: bool = False
    tol: float = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[2] != self.target.dim:
            raise ValueError("values must have shape (left, right, target_dim)")

    @property
    def left_dim(self) -> int:
        return self.values.shape[0]

    @property
    def right_dim(self) -> int:
        return self.values.shape[1]

    def symmetry_residual(self) -> float:
        if self.values.shape[0] != self.values.shape[1]:
            return float("inf")
        return float(np.max(np.abs(self.values - np.swapaxes(self.values, 0, 1))))
