"""Conformal invariants of a single immersion.

Covers the umbilic-corrected second fundamental form along a ruling
candidate, the subbundle it spans, verification that a distribution is
conformally ruled (umbilic leaves plus integrability), the conformal
s-nullity search, and the composition/rigidity criterion built on it.

The s-nullity of a point is a maximum over s-dimensional normal subspaces
and vectors inside them.  For s = 1 the search is exact up to an eigenvalue
clustering tolerance; for s >= 2 we report a certified lower bound: the
certificate subspace and vector are returned and re-evaluating the kernel
dimension at the certificate reproduces the reported value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisOutOfRange, RankJump
from .indefinite_linalg import DEFAULT_TOL
from .jets import (
    DistributionFrame,
    FundamentalData,
    ImmersionJet,
    align_frames,
    bracket_residual,
    fundamental_data,
    leaf_mean_curvature,
)

__all__ = [
    "ConformalSFF",
    "conformal_sff",
    "RuledVerdict",
    "is_conformally_ruled",
    "NullityReport",
    "s_nullity_at",
    "conformal_s_nullity",
    "rigidity_thresholds",
    "RigidityReport",
    "rigidity_criterion",
]


def _as_fund(obj) -> FundamentalData:
    if isinstance(obj, FundamentalData):
        return obj
    if isinstance(obj, ImmersionJet):
        return fundamental_data(obj)
    raise TypeError("expected an ImmersionJet or FundamentalData")


# ---------------------------------------------------------------------------
# the umbilic-corrected form and the subbundle it spans
# ---------------------------------------------------------------------------


@dataclass
class ConformalSFF:
    """alpha with the leaf-umbilic part removed, and the span it generates."""

    dist: DistributionFrame
    eta: np.ndarray            # (P, k) leaf mean curvature, normal-frame coords
    beta: np.ndarray           # (P, n, n, k) corrected form, tangent-frame coords
    span_frames: np.ndarray    # (P, k, ell) aligned frames of span{beta(Z, X)}
    ell: int
    nullity_containment: float  # residual of D inside the corrected-form nullity


def conformal_sff(obj, dist: DistributionFrame, tol: float = DEFAULT_TOL) -> ConformalSFF:
    """Corrected form beta = alpha - <,> eta and the subbundle spanned by
    beta(Z, X) with Z along the distribution."""
    fund = _as_fund(obj)
    p, n = fund.metric.shape[0], fund.metric.shape[1]
    k = fund.normal_rank
    eta = leaf_mean_curvature(fund, dist)
    beta = fund.alpha - np.eye(n)[None, :, :, None] * eta[:, None, None, :]
    # spans of beta(Z_u, E_b) per point
    bz = np.einsum("pau,pabt->ptub", dist.basis, beta).reshape(p, k, -1)
    scale = max(float(np.max(np.abs(fund.alpha))), 1.0)

    def rank_of(mat):
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv.size == 0:
            return 0
        return int(np.sum(sv > 10 * tol * max(float(sv[0]), scale)))

    ranks = np.array([rank_of(bz[q]) for q in range(p)])
    if ranks.size and ranks.min() != ranks.max():
        raise RankJump(f"corrected-form span rank varies on the grid: {set(ranks.tolist())}")
    ell = int(ranks[0]) if ranks.size else 0
    if ell == 0:
        frames = np.zeros((p, k, 0))
    else:
        gram = np.diag(np.asarray(fund.normal_pattern, dtype=float))
        frames, _, _ = align_frames(bz, gram, fund.jet.chart.shape, tol=tol * 10)
    # containment: values beta(Z, X) must lie in the span (D inside the
    # nullity of the corrected form projected off the span)
    paired = np.einsum("pau,pabt->pubt", dist.basis, beta)  # (P, d, n, k)
    resid = 0.0
    if ell < k and paired.size:
        for q in range(p):
            proj = frames[q] @ np.linalg.pinv(frames[q])  # (k, k)
            outside = paired[q] - paired[q] @ proj.T
            resid = max(resid, float(np.max(np.abs(outside))))
    return ConformalSFF(dist, eta, beta, frames, ell, resid)


# ---------------------------------------------------------------------------
# conformally ruled verification
# ---------------------------------------------------------------------------


@dataclass
class RuledVerdict:
    ruled: bool
    umbilic_residual: float
    bracket_residual_max: float


def is_conformally_ruled(
    obj,
    dist: DistributionFrame,
    umbilic_tol: float = 1e-6,
    bracket_tol: float = 1e-4,
) -> RuledVerdict:
    """Leaves mapped into affine subspaces or round spheres: umbilic in the
    ambient along an integrable distribution."""
    fund = _as_fund(obj)
    d = dist.dim
    eta = leaf_mean_curvature(fund, dist)
    alpha_dd = np.einsum("pau,pbv,pabt->puvt", dist.basis, dist.basis, fund.alpha)
    umb = alpha_dd - np.eye(d)[None, :, :, None] * eta[:, None, None, :]
    umbilic_residual = float(np.max(np.abs(umb))) if umb.size else 0.0
    br = float(np.max(bracket_residual(fund, dist)))
    return RuledVerdict(
        ruled=bool(umbilic_residual <= umbilic_tol and br <= bracket_tol),
        umbilic_residual=umbilic_residual,
        bracket_residual_max=br,
    )


# ---------------------------------------------------------------------------
# conformal s-nullity
# ---------------------------------------------------------------------------


@dataclass
class NullityReport:
    s: int
    value: int
    certificate_subspace: np.ndarray  # (k, s) orthonormal columns
    certificate_vector: np.ndarray    # (k,) vector inside the subspace
    exact: bool
    search_stats: dict = field(default_factory=dict)


def _kernel_dim(alpha: np.ndarray, v: np.ndarray, zeta: np.ndarray, cluster_tol: float) -> int:
    """dim of {X : <alpha(X, Y) - <X,Y> zeta, v_t> = 0 for all Y, t}."""
    n = alpha.shape[0]
    paired = np.einsum("ijc,ct->ijt", alpha, v)
    zv = zeta @ v  # (s,)
    rows = paired - np.eye(n)[:, :, None] * zv[None, None, :]
    mat = rows.reshape(n, -1).T
    if mat.size == 0:
        return n
    sv = np.linalg.svd(mat, compute_uv=False)
    scale = max(float(sv[0]) if sv.size else 0.0, float(np.max(np.abs(alpha))), 1e-12)
    return int(np.sum(sv <= cluster_tol * scale)) + (n - len(sv) if len(sv) < n else 0)


def _eig_multiplicity(sym: np.ndarray, cluster_tol: float) -> tuple[int, float]:
    """Largest cluster of eigenvalues within the tolerance; returns (count, center)."""
    vals = np.linalg.eigvalsh(sym)
    scale = max(float(np.max(np.abs(vals))), 1.0)
    best, center = 1, float(vals[0])
    i = 0
    while i < len(vals):
        j = i
        while j + 1 < len(vals) and vals[j + 1] - vals[i] <= cluster_tol * scale:
            j += 1
        if j - i + 1 > best:
            best = j - i + 1
            center = float(np.mean(vals[i : j + 1]))
        i += 1
    return best, center


def _unit_sphere_samples(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0]])
    pts = rng.normal(size=(count, dim))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def s_nullity_at(
    alpha: np.ndarray,
    s: int,
    seed: int = 0,
    restarts: int = 8,
    samples: int = 128,
    cluster_tol: float = 1e-6,
) -> NullityReport:
    """Conformal s-nullity of a single point from alpha in orthonormal frames.

    alpha: (n, n, p) with orthonormal tangent and normal frames (Riemannian).
    For s = 1 the eigenvalue-multiplicity sweep is exact up to clustering;
    for s >= 2 the result is a lower bound with a certificate.
    """
    n, _, p = alpha.shape
    if not 1 <= s <= p:
        raise HypothesisOutOfRange(f"s={s} outside 1..{p}")
    rng = np.random.default_rng(seed)
    stats = {"restarts": 0, "evaluations": 0, "best_trace": []}

    def record(value):
        stats["best_trace"].append(int(value))

    if s == 1:
        best = (-1, None, None)
        if p == 1:
            candidates = np.array([[1.0]])
        else:
            candidates = _unit_sphere_samples(p, samples, rng)
            candidates = np.vstack([candidates, np.eye(p)])
        for xi in candidates:
            a_xi = np.einsum("ijc,c->ij", alpha, xi)
            mult, center = _eig_multiplicity(a_xi, cluster_tol)
            stats["evaluations"] += 1
            if mult > best[0]:
                best = (mult, xi.copy(), center)
                record(mult)
        # local refinement around the best direction (coordinate ascent)
        if p > 1:
            xi = best[1].copy()
            step = 0.2
            for _ in range(60):
                improved = False
                for d in range(p):
                    for sgn in (1.0, -1.0):
                        trial = xi + sgn * step * np.eye(p)[d]
                        trial /= np.linalg.norm(trial)
                        mult, center = _eig_multiplicity(
                            np.einsum("ijc,c->ij", alpha, trial), cluster_tol
                        )
                        stats["evaluations"] += 1
                        if mult > best[0]:
                            best = (mult, trial.copy(), center)
                            xi = trial
                            improved = True
                            record(mult)
                if not improved:
                    step *= 0.5
                    if step < 1e-3:
                        break
        mult, xi, center = best
        v = xi[:, None]
        zeta = center * xi
        value = _kernel_dim(alpha, v, zeta, cluster_tol)
        return NullityReport(1, value, v, zeta, exact=True, search_stats=stats)

    # s >= 2: randomized multi-start over s-planes, candidate vectors from
    # the geometry (zeta = projection of alpha(X, X) for unit tangents X)
    def evaluate_plane(v: np.ndarray):
        nonlocal best
        # candidate zetas from tangent directions
        cands = [np.zeros(p)]
        for x in tangent_candidates:
            ax = np.einsum("ijc,i,j->c", alpha, x, x)
            cands.append(v @ (v.T @ ax))
        for zeta in cands:
            val = _kernel_dim(alpha, v, zeta, cluster_tol)
            stats["evaluations"] += 1
            if val > best[0]:
                best = (val, v.copy(), zeta.copy())
                record(val)

    tangent_candidates = list(np.eye(n))
    for xi in _unit_sphere_samples(p, 8, rng):
        a_xi = np.einsum("ijc,c->ij", alpha, xi)
        _, vecs = np.linalg.eigh(a_xi)
        tangent_candidates.extend(vecs.T)
    tangent_candidates.extend(_unit_sphere_samples(n, 16, rng))

    best = (-1, None, None)
    if s == p:
        planes = [np.eye(p)]
    else:
        planes = []
        if p <= 3:
            for x in _unit_sphere_samples(p, samples, rng):
                q, _ = np.linalg.qr(np.column_stack([x] + [rng.normal(size=p) for _ in range(s - 1)]))
                planes.append(q[:, :s])
        for _ in range(restarts):
            stats["restarts"] += 1
            q, _ = np.linalg.qr(rng.normal(size=(p, s)))
            planes.append(q[:, :s])
    for v in planes:
        evaluate_plane(v)
    value, v, zeta = best
    # certificate re-evaluation must reproduce the value
    check = _kernel_dim(alpha, v, zeta, cluster_tol)
    stats["certificate_check"] = int(check)
    return NullityReport(s, int(check), v, zeta, exact=False, search_stats=stats)


def conformal_s_nullity(
    obj,
    s: int,
    points=None,
    seed: int = 0,
    restarts: int = 8,
    cluster_tol: float = 1e-6,
) -> list[tuple[int, NullityReport]]:
    """Per-point s-nullity reports; `points` defaults to all grid points for
    s = 1 and the chart center otherwise."""
    fund = _as_fund(obj)
    if any(e != 1 for e in fund.normal_pattern) or any(e != 1 for e in fund.tangent_pattern):
        raise HypothesisOutOfRange("s-nullity search expects Riemannian data")
    npts = fund.metric.shape[0]
    if points is None:
        points = range(npts) if s == 1 else [fund.jet.chart.center_index()]
    out = []
    for q in points:
        rep = s_nullity_at(
            fund.alpha[q], s, seed=seed * 1_000_003 + int(q), restarts=restarts,
            cluster_tol=cluster_tol,
        )
        out.append((int(q), rep))
    return out


# ---------------------------------------------------------------------------
# the composition criterion
# ---------------------------------------------------------------------------


def rigidity_thresholds(n: int, p: int, q: int) -> dict:
    """Bounds the s-nullities must satisfy for the composition criterion.

    Raises HypothesisOutOfRange unless p <= 5 and p <= q <= n - p - 3.
    """
    if not (1 <= p <= 5):
        raise HypothesisOutOfRange(f"codimension p={p} must be between 1 and 5")
    if not (p <= q <= n - p - 3):
        raise HypothesisOutOfRange(f"target codimension q={q} outside [{p}, {n - p - 3}]")
    thresholds = {s: n + p - q - 2 * s - 1 for s in range(1, p + 1)}
    extra = n - 2 * (q - p) + 1 if q >= p + 5 else None
    return {"per_s": thresholds, "extra_nu1": extra}


@dataclass
class RigidityReport:
    n: int
    p: int
    q: int
    thresholds: dict
    nu_lower_bounds: dict          # s -> max over evaluated points
    satisfied: bool                # all bounds hold (up to search confidence)
    conclusive_violation: bool     # some lower bound already exceeds its threshold
    per_point: list = field(default_factory=list)


def rigidity_criterion(obj, q: int, seed: int = 0, points=None, restarts: int = 8) -> RigidityReport:
    """Evaluate the nullity hypotheses of the composition criterion.

    Lower bounds are used, so a violated inequality is conclusive while a
    satisfied one holds up to search confidence.
    """
    fund = _as_fund(obj)
    n = fund.metric.shape[1]
    p = fund.normal_rank
    th = rigidity_thresholds(n, p, q)
    nu = {}
    per_point = []
    for s in range(1, p + 1):
        reports = conformal_s_nullity(fund, s, points=points, seed=seed, restarts=restarts)
        nu[s] = max(rep.value for _, rep in reports)
        per_point.append((s, [(idx, rep.value) for idx, rep in reports]))
    ok = all(nu[s] <= th["per_s"][s] for s in nu)
    if th["extra_nu1"] is not None:
        ok = ok and nu[1] <= th["extra_nu1"]
    violated = any(nu[s] > th["per_s"][s] for s in nu) or (
        th["extra_nu1"] is not None and nu[1] > th["extra_nu1"]
    )
    return RigidityReport(
        n=n, p=p, q=q, thresholds=th, nu_lower_bounds=nu,
        satisfied=ok, conclusive_violation=violated, per_point=per_point,
    )
