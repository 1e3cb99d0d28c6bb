"""Sampled 3-jets of immersions on chart grids and the calculus built on them.

An immersion enters as per-point position, first, second and optionally third
partial derivatives on a rectangular chart grid.  From these we compute the
induced metric, orthonormal tangent frames, aligned normal frames, second
fundamental forms, shape operators and normal connection coefficients.
Normal frames are produced by a breadth-first sweep from a seed point: each
fiber basis is fitted to its parent's frame (orthogonal polar fit in the
definite case, pattern-ordered Gram-Schmidt in the indefinite one), which
realizes the smooth-subbundle hypotheses numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import jet3
from .errors import FrameAlignmentFailure, NotConformal, NotImmersion
from .indefinite_linalg import DEFAULT_TOL, ScalarProduct, orthonormal_columns
from .regions import bfs_order

__all__ = [
    "ChartGrid",
    "ImmersionJet",
    "ImmersionMap",
    "FundamentalData",
    "DistributionFrame",
    "grid_derivative",
    "scalar_fd_jets",
    "induced_metric",
    "metric_derivative",
    "christoffel",
    "fundamental_data",
    "coordinate_distribution",
    "distribution_from_spans",
    "align_frames",
    "bracket_residual",
    "leaf_mean_curvature",
    "conformal_factor",
    "gauss_equation_residual",
]


# ---------------------------------------------------------------------------
# chart grids and finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartGrid:
    """Uniform tensor-product grid over a box in chart coordinates."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.shape) == len(self.spacing) == len(self.origin)):
            raise ValueError("shape, spacing and origin must have equal length")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def points(self) -> np.ndarray:
        """All grid points, C-ordered, shape (npoints, ndim)."""
        mesh = np.meshgrid(*(self.axis(i) for i in range(self.ndim)), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.ndim)

    def center_index(self) -> int:
        return int(np.ravel_multi_index(tuple(s // 2 for s in self.shape), self.shape))

    def with_extra_axes(self, counts, spacings, origins) -> "ChartGrid":
        return ChartGrid(
            self.shape + tuple(counts),
            self.spacing + tuple(spacings),
            self.origin + tuple(origins),
        )


def _fornberg(nodes: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Finite-difference weights of B. Fornberg for derivative `order` at x0."""
    n = len(nodes)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@lru_cache(maxsize=None)
def _derivative_matrix(npts: int, h: float, order: int) -> np.ndarray:
    """Dense one-axis differentiation matrix from 5-point Fornberg stencils."""
    width = min(5, npts)
    if npts <= order:
        raise ValueError(f"axis with {npts} points cannot support order-{order} derivative")
    mat = np.zeros((npts, npts))
    xs = h * np.arange(npts)
    for i in range(npts):
        start = min(max(i - width // 2, 0), npts - width)
        w = _fornberg(xs[start : start + width], xs[i], order)
        mat[i, start : start + width] = w
    return mat


def grid_derivative(values: np.ndarray, grid: ChartGrid, axis: int, order: int = 1) -> np.ndarray:
    """Partial derivative of a sampled field (P, ...) along a chart axis."""
    mat = _derivative_matrix(grid.shape[axis], grid.spacing[axis], order)
    rest = values.shape[1:]
    arr = values.reshape(grid.shape + rest)
    arr = np.moveaxis(arr, axis, 0)
    out = np.tensordot(mat, arr, axes=([1], [0]))
    out = np.moveaxis(out, 0, axis)
    return out.reshape((grid.npoints,) + rest)


def scalar_fd_jets(values: np.ndarray, grid: ChartGrid, order: int = 3):
    """(d1, d2, d3) of a per-point scalar field by nested stencils."""
    n = grid.ndim
    p = grid.npoints
    d1 = np.stack([grid_derivative(values, grid, i) for i in range(n)], axis=1)
    d2 = d3 = None
    if order >= 2:
        d2 = np.zeros((p, n, n))
        for i in range(n):
            gi = grid_derivative(values, grid, i)
            for j in range(i, n):
                if i == j:
                    d2[:, i, i] = grid_derivative(values, grid, i, order=2)
                else:
                    d2[:, i, j] = d2[:, j, i] = grid_derivative(gi, grid, j)
    if order >= 3:
        d3 = np.zeros((p, n, n, n))
        for i in range(n):
            for j in range(n):
                fld = d2[:, i, j]
                for k in range(n):
                    d3[:, i, j, k] = grid_derivative(fld, grid, k)
        d3 = (d3 + np.transpose(d3, (0, 1, 3, 2)) + np.transpose(d3, (0, 2, 1, 3))
              + np.transpose(d3, (0, 2, 3, 1)) + np.transpose(d3, (0, 3, 1, 2))
              + np.transpose(d3, (0, 3, 2, 1))) / 6.0
    return d1, d2, d3


# ---------------------------------------------------------------------------
# immersion jets
# ---------------------------------------------------------------------------


@dataclass
class ImmersionJet:
    """3-jet of an immersion of a chart grid into a flat inner-product space.

    values: (P, m); d1: (P, n, m); d2: (P, n, n, m); d3: (P, n, n, n, m) or None.
    """

    chart: ChartGrid
    ambient: ScalarProduct
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray | None = None
    source: str = "closed-form"

    @property
    def n(self) -> int:
        return self.chart.ndim

    @property
    def m(self) -> int:
        return self.ambient.dim

    @property
    def codim(self) -> int:
        return self.m - self.n

    @staticmethod
    def from_function(fn, chart: ChartGrid, ambient: ScalarProduct, order: int = 3) -> "ImmersionJet":
        """Evaluate a Jet3-valued component function on the whole grid."""
        xs = jet3.variables(chart.points(), order=order)
        comps = fn(xs)
        p, n, m = chart.npoints, chart.ndim, ambient.dim
        if len(comps) != m:
            raise ValueError(f"function returned {len(comps)} components for ambient dim {m}")
        values = np.zeros((p, m))
        d1 = np.zeros((p, n, m))
        d2 = np.zeros((p, n, n, m))
        d3 = np.zeros((p, n, n, n, m)) if order >= 3 else None
        template = xs[0]
        for c, comp in enumerate(comps):
            if not isinstance(comp, jet3.Jet3):
                comp = jet3.constant(comp, template)
            values[:, c] = comp.v
            d1[:, :, c] = comp.g
            d2[:, :, :, c] = comp.h
            if order >= 3:
                d3[:, :, :, :, c] = comp.t
        return ImmersionJet(chart, ambient, values, d1, d2, d3, source="closed-form")

    @staticmethod
    def from_values(values: np.ndarray, chart: ChartGrid, ambient: ScalarProduct) -> "ImmersionJet":
        """Build the jet from sampled positions alone, by finite differences."""
        p, n, m = chart.npoints, chart.ndim, ambient.dim
        values = np.asarray(values, dtype=float).reshape(p, m)
        d1 = np.zeros((p, n, m))
        d2 = np.zeros((p, n, n, m))
        for i in range(n):
            d1[:, i] = grid_derivative(values, chart, i)
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    d2[:, i, i] = grid_derivative(values, chart, i, order=2)
                else:
                    d2[:, i, j] = d2[:, j, i] = grid_derivative(d1[:, i], chart, j)
        return ImmersionJet(chart, ambient, values, d1, d2, None, source="finite-difference")

    def immersion_residual(self) -> float:
        """max over points of (n-th singular value / first); small means rank drop."""
        sv = np.linalg.svd(self.d1, compute_uv=False)  # (P, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = sv[:, -1] / sv[:, 0]
        return float(np.min(ratio))

    def require_immersion(self, tol: float = 1e-7):
        if self.immersion_residual() <= tol:
            raise NotImmersion("differential drops rank on the chart grid")


@dataclass
class ImmersionMap:
    """A closed-form immersion given by a Jet3-valued component function.

    Root finding and slice reparametrization need evaluation at arbitrary
    points, which sampled jets cannot provide; gallery immersions therefore
    carry their defining function around.
    """

    name: str
    chart_dim: int
    ambient: ScalarProduct
    fn: object  # Callable[[list[Jet3]], list[Jet3]]
    factor_fn: object | None = None  # closed-form conformal factor vs its base
    params: dict = field(default_factory=dict)

    def evaluate(self, points: np.ndarray, order: int = 3):
        """Component jets at a batch of points, (list of Jet3)."""
        xs = jet3.variables(np.asarray(points, dtype=float), order=order)
        comps = self.fn(xs)
        out = []
        for comp in comps:
            if not isinstance(comp, jet3.Jet3):
                comp = jet3.constant(comp, xs[0])
            out.append(comp)
        return out

    def values(self, points: np.ndarray) -> np.ndarray:
        comps = self.evaluate(points, order=0)
        return np.stack([c.v for c in comps], axis=-1)

    def jet(self, chart: ChartGrid, order: int = 3) -> ImmersionJet:
        return ImmersionJet.from_function(self.fn, chart, self.ambient, order=order)

    def jet_fd(self, chart: ChartGrid) -> ImmersionJet:
        return ImmersionJet.from_values(self.values(chart.points()), chart, self.ambient)

    def factor_jets(self, points: np.ndarray, order: int = 3):
        if self.factor_fn is None:
            return None
        xs = jet3.variables(np.asarray(points, dtype=float), order=order)
        return self.factor_fn(xs)


def induced_metric(jet: ImmersionJet, tol: float = 1e-7) -> np.ndarray:
    """Per-point Gram matrices of the first partials, (P, n, n)."""
    jet.require_immersion(tol)
    return np.einsum("pia,ab,pjb->pij", jet.d1, jet.ambient.gram, jet.d1)


def metric_derivative(jet: ImmersionJet) -> np.ndarray:
    """Exact coordinate derivative dg[p, k, i, j] = d_k g_ij from the 2-jet."""
    g = jet.ambient.gram
    t1 = np.einsum("pkia,ab,pjb->pkij", jet.d2, g, jet.d1)
    return t1 + np.transpose(t1, (0, 1, 3, 2))


def christoffel(jet: ImmersionJet, metric: np.ndarray | None = None) -> np.ndarray:
    """Christoffel symbols Gamma[p, k, i, j] = Gamma^k_ij of the induced metric."""
    if metric is None:
        metric = induced_metric(jet)
    dg = metric_derivative(jet)  # dg[p, a, b, c] = d_a g_bc
    ginv = np.linalg.inv(metric)
    # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    sym = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)  # sym[p, i, j, l]
    return 0.5 * np.einsum("pkl,pijl->pkij", ginv, sym)


# ---------------------------------------------------------------------------
# frame alignment machinery
# ---------------------------------------------------------------------------


def _inv_sqrt_spd(h: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(h)
    if np.any(vals <= 0):
        raise FrameAlignmentFailure("polar fit lost rank")
    return (vecs / np.sqrt(vals)) @ vecs.T


def _seed_frame(span: np.ndarray, gram: np.ndarray, tol: float):
    """Pseudo-orthonormal basis of the span, negative-norm vectors first."""
    b = orthonormal_columns(span, tol)
    g = b.T @ gram @ b
    vals, vecs = np.linalg.eigh(0.5 * (g + g.T))
    scale = max(float(np.max(np.abs(vals))), 1e-300) if vals.size else 1.0
    if vals.size and np.min(np.abs(vals)) <= tol * scale:
        raise FrameAlignmentFailure("degenerate fiber: cannot seed a frame")
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    frame = b @ (vecs / np.sqrt(np.abs(vals)))
    pattern = tuple(int(np.sign(v)) for v in vals)
    return frame, pattern


def _fit_frame(candidate: np.ndarray, fiber: np.ndarray, gram: np.ndarray,
               pattern: tuple[int, ...], tol: float) -> np.ndarray:
    """Fit a pseudo-orthonormal frame of `fiber` close to `candidate`."""
    gf = fiber.T @ gram @ fiber
    rhs = fiber.T @ gram @ candidate
    try:
        coeff = np.linalg.solve(gf, rhs)
    except np.linalg.LinAlgError as exc:
        raise FrameAlignmentFailure("degenerate fiber during sweep") from exc
    y = fiber @ coeff
    if all(s == 1 for s in pattern):
        h = y.T @ gram @ y
        return y @ _inv_sqrt_spd(0.5 * (h + h.T))
    # mixed signature: ordered Gram-Schmidt keeping the sign pattern
    k = y.shape[1]
    out = np.zeros_like(y)
    for t in range(k):
        v = y[:, t].copy()
        for s in range(t):
            v -= pattern[s] * float(out[:, s] @ gram @ v) * out[:, s]
        c = float(v @ gram @ v)
        if pattern[t] * c <= tol:
            raise FrameAlignmentFailure("sign pattern lost during sweep")
        v = v / np.sqrt(abs(c))
        if float(v @ y[:, t]) < 0:
            v = -v
        out[:, t] = v
    return out


def align_frames(
    spans: np.ndarray,
    gram,
    shape: tuple[int, ...],
    mask: np.ndarray | None = None,
    seed: int | None = None,
    tol: float = DEFAULT_TOL,
    threshold: float = 0.5,
):
    """Sweep-aligned pseudo-orthonormal frames of a pointwise subbundle.

    spans: (P, m, s) spanning vectors per point (columns; s >= rank).
    gram: (m, m) or (P, m, m) ambient Gram.
    Returns (frames (P, m, k), pattern, max_step) with frames zero off-mask.
    """
    npts = spans.shape[0]
    if mask is None:
        mask = np.ones(npts, dtype=bool)
    order = bfs_order(shape, mask, seed)
    if not order:
        raise ValueError("empty mask")
    per_point_gram = np.asarray(gram).ndim == 3

    def gram_at(p):
        return gram[p] if per_point_gram else gram

    seed_pt = order[0][0]
    frame0, pattern = _seed_frame(spans[seed_pt], gram_at(seed_pt), tol)
    k = frame0.shape[1]
    frames = np.zeros((npts, spans.shape[1], k))
    frames[seed_pt] = frame0
    max_step = 0.0
    for point, parent in order[1:]:
        fiber = orthonormal_columns(spans[point], tol)
        if fiber.shape[1] != k:
            raise FrameAlignmentFailure(
                f"fiber rank {fiber.shape[1]} != {k} inside a constant-rank region"
            )
        frames[point] = _fit_frame(frames[parent], fiber, gram_at(point), pattern, tol)
        step = float(np.max(np.abs(frames[point] - frames[parent])))
        max_step = max(max_step, step)
        if step > threshold:
            raise FrameAlignmentFailure(f"frame jump {step:.3f} exceeds threshold {threshold}")
    return frames, pattern, max_step


# ---------------------------------------------------------------------------
# fundamental data
# ---------------------------------------------------------------------------


@dataclass
class FundamentalData:
    """First/second order invariants of an immersion in aligned frames.

    alpha is stored in the orthonormal tangent frame with normal-frame
    components: alpha[p, a, b, t] so that alpha(E_a, E_b) = sum_t alpha[...t] xi_t.
    nconn[p, i, t, s] are the normal connection coefficients along the
    coordinate field d_i.
    """

    jet: ImmersionJet
    metric: np.ndarray                 # (P, n, n)
    tangent_pattern: tuple[int, ...]
    tangent_frame: np.ndarray          # (P, n, n) coords->frame matrix C, E_a = sum_i C[i,a] d_i
    tangent_frame_inv: np.ndarray      # (P, n, n) inverse of C
    tangent_ambient: np.ndarray        # (P, m, n) ambient vectors of E_a
    normal_frame: np.ndarray           # (P, m, k)
    normal_pattern: tuple[int, ...]
    alpha: np.ndarray                  # (P, n, n, k) tangent-frame coords
    alpha_ambient: np.ndarray          # (P, n, n, m) coordinate tangent indices
    nconn: np.ndarray                  # (P, n, k, k)
    diagnostics: dict = field(default_factory=dict)

    @property
    def normal_rank(self) -> int:
        return self.normal_frame.shape[2]

    def normal_gram(self) -> np.ndarray:
        return np.diag(np.asarray(self.normal_pattern, dtype=float))

    def shape_pairing(self, t: int) -> np.ndarray:
        """Matrix <alpha(E_a, E_b), xi_t> per point, (P, n, n)."""
        return self.alpha[..., t] * self.normal_pattern[t]

    def normal_coordinates(self, vectors: np.ndarray) -> np.ndarray:
        """Frame coordinates of ambient vectors lying in the normal space.

        `vectors` is either a single ambient vector or a per-point array
        (P, ..., m); the result carries frame components on the last axis.
        """
        eps = np.asarray(self.normal_pattern, dtype=float)
        g = self.jet.ambient.gram
        if vectors.ndim == 1:
            return np.einsum("a,ab,pbt->pt", vectors, g, self.normal_frame) * eps
        return np.einsum("p...a,ab,pbt->p...t", vectors, g, self.normal_frame) * eps

    def normal_ambient(self, coords: np.ndarray) -> np.ndarray:
        """Ambient vectors of per-point normal frame coordinates (..., k)."""
        return np.einsum("pat,p...t->p...a", self.normal_frame, coords)

    def frame_to_coords(self, vecs: np.ndarray) -> np.ndarray:
        """Tangent-frame components -> coordinate components (per point)."""
        return np.einsum("pia,p...a->p...i", self.tangent_frame, vecs)

    def coords_to_frame(self, vecs: np.ndarray) -> np.ndarray:
        return np.einsum("pai,p...i->p...a", self.tangent_frame_inv, vecs)


def fundamental_data(
    jet: ImmersionJet,
    tol: float = DEFAULT_TOL,
    align_threshold: float = 0.5,
    immersion_tol: float = 1e-7,
) -> FundamentalData:
    """Metric, frames, second fundamental form and normal connection of a jet."""
    g_amb = jet.ambient.gram
    metric = induced_metric(jet, immersion_tol)
    p, n, m = jet.chart.npoints, jet.n, jet.m

    vals = np.linalg.eigvalsh(metric)
    neg = int(np.sum(vals[0] < 0))
    if np.any(np.sum(vals < 0, axis=1) != neg) or np.any(np.abs(vals) < 1e-12):
        raise NotImmersion("induced metric changes signature or degenerates on the chart")
    if neg == 0:
        chol = np.linalg.cholesky(metric)
        tangent_frame = np.linalg.inv(chol).transpose(0, 2, 1)
        tangent_pattern = (1,) * n
    else:
        lams, frames = np.linalg.eigh(metric)  # ascending eigenvalues
        # deterministic signs: largest-magnitude component of each vector positive
        lead = np.argmax(np.abs(frames), axis=1)
        signs = np.sign(np.take_along_axis(frames, lead[:, None, :], axis=1))[:, 0, :]
        frames = frames * np.where(signs == 0, 1.0, signs)[:, None, :]
        tangent_frame = frames / np.sqrt(np.abs(lams))[:, None, :]
        tangent_pattern = tuple(int(np.sign(v)) for v in lams[0])
    tangent_frame_inv = np.linalg.inv(tangent_frame)
    tangent_ambient = np.einsum("pim,pia->pma", jet.d1, tangent_frame)

    # normal spaces: kernels of <d_i F, .> per point, then one aligned sweep
    rows = np.einsum("pia,ab->pib", jet.d1, g_amb)  # (P, n, m)
    k = m - n
    if k == 0:
        normal_frame = np.zeros((p, m, 0))
        normal_pattern = ()
        max_step = 0.0
    else:
        spans = np.zeros((p, m, k))
        for q in range(p):
            _, _, vt = np.linalg.svd(rows[q], full_matrices=True)
            spans[q] = vt[n:].T
        normal_frame, normal_pattern, max_step = align_frames(
            spans, g_amb, jet.chart.shape, tol=tol, threshold=align_threshold
        )

    # second fundamental form: normal component of the coordinate second partials
    eta = np.asarray(tangent_pattern, dtype=float)
    d2_dot_e = np.einsum("pija,ab,pbc->pijc", jet.d2, g_amb, tangent_ambient)
    tang_part = np.einsum("pijc,c,pmc->pijm", d2_dot_e, eta, tangent_ambient)
    alpha_ambient = jet.d2 - tang_part
    eps = np.asarray(normal_pattern, dtype=float)
    alpha_coord_comp = np.einsum("pijm,mn,pnt->pijt", alpha_ambient, g_amb, normal_frame) * eps
    alpha = np.einsum("pia,pjb,pijt->pabt", tangent_frame, tangent_frame, alpha_coord_comp)

    # normal connection from derivatives of the aligned frame field
    nconn = np.zeros((p, n, k, k))
    if k:
        for i in range(n):
            dxi = grid_derivative(normal_frame, jet.chart, i)  # (P, m, k)
            nconn[:, i] = np.einsum("pmt,mn,pns->pts", dxi, g_amb, normal_frame) * eps

    diagnostics = {
        "alpha_symmetry": float(np.max(np.abs(alpha - np.swapaxes(alpha, 1, 2)))) if alpha.size else 0.0,
        "frame_step": max_step,
    }
    if k:
        skew = nconn * eps[None, None, None, :] + np.swapaxes(nconn * eps[None, None, None, :], 2, 3)
        diagnostics["metric_compatibility"] = float(np.max(np.abs(skew)))
    else:
        diagnostics["metric_compatibility"] = 0.0

    return FundamentalData(
        jet=jet,
        metric=metric,
        tangent_pattern=tangent_pattern,
        tangent_frame=tangent_frame,
        tangent_frame_inv=tangent_frame_inv,
        tangent_ambient=tangent_ambient,
        normal_frame=normal_frame,
        normal_pattern=normal_pattern,
        alpha=alpha,
        alpha_ambient=alpha_ambient,
        nconn=nconn,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# tangent distributions
# ---------------------------------------------------------------------------


@dataclass
class DistributionFrame:
    """Aligned per-point basis of a tangent distribution, in tangent-frame coords."""

    basis: np.ndarray  # (P, n, d)
    integrability_residual: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.basis.shape[2]

    def coordinate_components(self, fund: FundamentalData) -> np.ndarray:
        """Components w.r.t. the coordinate fields d_i, (P, n, d)."""
        return np.einsum("pia,pau->piu", fund.tangent_frame, self.basis)


def coordinate_distribution(fund: FundamentalData, axes: list[int]) -> DistributionFrame:
    """Distribution spanned by chosen coordinate fields, orthonormalized."""
    p, n = fund.metric.shape[0], fund.metric.shape[1]
    basis = np.zeros((p, n, len(axes)))
    cinv_t = fund.tangent_frame_inv  # rows: coords of d_i in frame? C_inv[a,i]
    for col, ax in enumerate(axes):
        basis[:, :, col] = cinv_t[:, :, ax]
    for q in range(p):
        basis[q] = orthonormal_columns(basis[q])
    return DistributionFrame(basis)


def distribution_from_spans(
    fund: FundamentalData,
    spans: np.ndarray,
    mask: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    threshold: float = 0.5,
) -> DistributionFrame:
    """Aligned distribution frame from pointwise spanning sets (frame coords)."""
    frames, _, _ = align_frames(
        spans, np.eye(fund.metric.shape[1]), fund.jet.chart.shape, mask=mask, tol=tol,
        threshold=threshold,
    )
    return DistributionFrame(frames)


def bracket_residual(fund: FundamentalData, dist: DistributionFrame) -> np.ndarray:
    """Per-point norm of Lie brackets of the frame outside the distribution."""
    grid = fund.jet.chart
    xc = dist.coordinate_components(fund)  # (P, n, d)
    p, n, d = xc.shape
    res = np.zeros(p)
    for u in range(d):
        for v in range(u + 1, d):
            bracket = np.zeros((p, n))
            for j in range(n):
                dxv = grid_derivative(xc[:, :, v], grid, j)  # (P, n)
                dxu = grid_derivative(xc[:, :, u], grid, j)
                bracket += xc[:, j, u][:, None] * dxv - xc[:, j, v][:, None] * dxu
            bframe = np.einsum("pai,pi->pa", fund.tangent_frame_inv, bracket)
            inside = np.einsum("pau,pu->pa", dist.basis, np.einsum("pau,pa->pu", dist.basis, bframe))
            res = np.maximum(res, np.linalg.norm(bframe - inside, axis=1))
    return res


def leaf_mean_curvature(fund: FundamentalData, dist: DistributionFrame) -> np.ndarray:
    """Normal part of the leaf mean curvature: trace of alpha over the leaves.

    Returns normal-frame coordinates, (P, k).
    """
    d = dist.dim
    if d == 0:
        return np.zeros((fund.metric.shape[0], fund.normal_rank))
    eta = np.asarray(fund.tangent_pattern, dtype=float)
    signs = np.einsum("pau,a,pau->pu", dist.basis, eta, dist.basis)  # +-1 per leg
    traced = np.einsum("pau,pbu,pabt->put", dist.basis, dist.basis, fund.alpha)
    return np.einsum("pu,put->pt", signs, traced) / d


def conformal_factor(jf: ImmersionJet, jg: ImmersionJet, tol: float = 1e-6):
    """Pointwise factor phi with metric(g) = phi^2 metric(f), plus residual."""
    gf = induced_metric(jf)
    gg = induced_metric(jg)
    return conformal_factor_of_metrics(gf, gg, tol)


def conformal_factor_of_metrics(gf: np.ndarray, gg: np.ndarray, tol: float = 1e-6):
    num = np.einsum("pij,pij->p", gg, gf)
    den = np.einsum("pij,pij->p", gf, gf)
    phi2 = num / den
    if np.any(phi2 <= 0):
        raise NotConformal("proportionality factor is not positive")
    resid = gg - phi2[:, None, None] * gf
    scale = np.linalg.norm(gg.reshape(len(gg), -1), axis=1)
    rel = np.linalg.norm(resid.reshape(len(resid), -1), axis=1) / np.maximum(scale, 1e-300)
    if float(np.max(rel)) > tol:
        raise NotConformal(f"metrics are not proportional: residual {float(np.max(rel)):.3e}")
    return np.sqrt(phi2), rel


def gauss_equation_residual(fund: FundamentalData) -> np.ndarray:
    """Per-point residual of the trace of extrinsic vs intrinsic curvature.

    Compares <R(d_i, d_j) d_k, d_l> from the metric against the product of
    second fundamental forms; finite differences of the Christoffel field are
    the only inexact ingredient on closed-form jets.
    """
    jet = fund.jet
    grid = jet.chart
    metric = fund.metric
    gam = christoffel(jet, metric)  # (P, k, i, j)
    p, n = metric.shape[0], metric.shape[1]
    dgam = np.stack([grid_derivative(gam, grid, i) for i in range(n)], axis=1)  # (P, i, l, j, k)
    # R^l_{ijk} = d_i Gam^l_{jk} - d_j Gam^l_{ik} + Gam^l_{im} Gam^m_{jk} - Gam^l_{jm} Gam^m_{ik}
    r = np.zeros((p, n, n, n, n))  # r[p, l, i, j, k]
    for i in range(n):
        for j in range(n):
            r[:, :, i, j, :] = (
                dgam[:, i, :, j, :]
                - dgam[:, j, :, i, :]
                + np.einsum("plm,pmk->plk", gam[:, :, i, :], gam[:, :, j, :])
                - np.einsum("plm,pmk->plk", gam[:, :, j, :], gam[:, :, i, :])
            )
    lhs = np.einsum("pwl,plijk->pijkw", metric, r)
    g_amb = jet.ambient.gram
    # <R(X_i, X_j) X_k, X_w> = <alpha(i, w), alpha(j, k)> - <alpha(j, w), alpha(i, k)>
    rhs = np.einsum("piwa,ab,pjkb->pijkw", fund.alpha_ambient, g_amb, fund.alpha_ambient) - np.einsum(
        "pjwa,ab,pikb->pijkw", fund.alpha_ambient, g_amb, fund.alpha_ambient
    )
    return np.max(np.abs(lhs - rhs).reshape(p, -1), axis=1)
