"""Ruled extensions of transfer pairs and the light-cone slice generator.

Once a pair carries a parallel transfer isometry between subbundles of its
normal bundles, the obstruction form

    (Y + xi, X)  |->  ((D_X (Y + xi)) off the transfer bundle,
                       (D_X (Y + T xi)) off its partner)

is tensorial, and its kernel cuts the directions along which both immersions
extend by straight fibers: sweeping the fiber part of the kernel through
ambient addition produces the mutually ruled extension pair.  The second
half of the module runs the construction the other way: slicing a Lorentz
embedding with the light cone manufactures conformal pairs on the slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NoIntersection,
    NotImmersionAtRadius,
    NotIsometricPair,
    NotTransversal,
    RankJump,
)
from .indefinite_linalg import orthonormal_columns
from .jet3 import Jet3
from .jets import (
    ChartGrid,
    FundamentalData,
    ImmersionJet,
    ImmersionMap,
    align_frames,
    bracket_residual,
    conformal_factor_of_metrics,
    fundamental_data,
    grid_derivative,
    induced_metric,
)
from .lightcone import LightConeModel, cone_projection
from .pair_pipeline import RegionState, transfer_residuals

__all__ = [
    "TransferData",
    "ObstructionData",
    "extension_obstruction",
    "ExtensionPair",
    "ruled_extension",
    "verify_extension",
    "SliceData",
    "generate_conformal_pair",
    "transversality_check",
]


# ---------------------------------------------------------------------------
# inputs: a transfer pair, from the pipeline or hand-built
# ---------------------------------------------------------------------------


@dataclass
class TransferData:
    """The data the extension construction consumes.

    Holds both immersions' fundamental data, aligned frames of the transfer
    bundles, the identification matrix between the normal bundles, and the
    ruling distribution.
    """

    left: FundamentalData
    right: FundamentalData
    transfer_bundle: np.ndarray        # (P, kl, ell)
    transfer_pattern: tuple[int, ...]
    transfer_bundle_right: np.ndarray  # (P, kr, ell)
    identification: np.ndarray         # (P, kr, kl)
    rulings: np.ndarray                # (P, n, d)
    mask: np.ndarray

    @staticmethod
    def from_region(state: RegionState) -> "TransferData":
        return TransferData(
            left=state.left,
            right=state.right,
            transfer_bundle=state.transfer_bundle,
            transfer_pattern=state.transfer_pattern,
            transfer_bundle_right=state.transfer_bundle_right,
            identification=state.identification,
            rulings=state.rulings,
            mask=state.mask,
        )

    @staticmethod
    def from_frames(
        fund_l: FundamentalData,
        fund_r: FundamentalData,
        l_frames: np.ndarray,
        lhat_frames: np.ndarray,
        pattern: tuple[int, ...],
        rulings: np.ndarray,
    ) -> "TransferData":
        """Build the identification from matched pseudo-orthonormal frames."""
        eps_l = np.asarray(fund_l.normal_pattern, dtype=float)
        pat = np.asarray(pattern, dtype=float)
        ident = np.einsum("u,pku,pmu->pkm", pat, lhat_frames, l_frames * eps_l[None, :, None])
        p = fund_l.metric.shape[0]
        return TransferData(
            fund_l, fund_r, l_frames, tuple(int(x) for x in pattern),
            lhat_frames, ident, rulings, np.ones(p, dtype=bool),
        )

    @property
    def ell(self) -> int:
        return self.transfer_bundle.shape[2]


# ---------------------------------------------------------------------------
# the obstruction form and its kernel
# ---------------------------------------------------------------------------


@dataclass
class ObstructionData:
    """Kernel of the obstruction form, split into rulings and fiber part."""

    data: TransferData
    delta: np.ndarray       # (P, n + ell, s) kernel frames (tangent + bundle coords)
    fibers: np.ndarray      # (P, n + ell, r) complement of the rulings inside delta
    s: int
    r: int
    residuals: dict = field(default_factory=dict)


def extension_obstruction(data: TransferData, fd_tol: float = 1e-6, tol: float = 1e-9) -> ObstructionData:
    """Assemble the obstruction form on frame fields and take its kernel.

    The form is tensorial because the bundle component of the argument is
    projected away; numerically it is built from grid derivatives of the
    tangent and bundle frame fields on both sides.
    """
    fl, fr = data.left, data.right
    chart = fl.jet.chart
    p, n = fl.metric.shape[0], fl.metric.shape[1]
    ell = data.ell
    eps_l = np.asarray(fl.normal_pattern, dtype=float)
    eps_r = np.asarray(fr.normal_pattern, dtype=float)
    pat = np.asarray(data.transfer_pattern, dtype=float)
    gl, gr = fl.jet.ambient.gram, fr.jet.ambient.gram

    # ambient realizations of the argument fields
    e_l = fl.tangent_ambient                      # (P, ml, n)
    e_r = fr.tangent_ambient
    lf_amb = np.einsum("pmt,ptu->pmu", fl.normal_frame, data.transfer_bundle)
    lh_amb = np.einsum("pmt,ptu->pmu", fr.normal_frame, data.transfer_bundle_right)
    args_l = np.concatenate([e_l, lf_amb], axis=2)   # (P, ml, n + ell)
    args_r = np.concatenate([e_r, lh_amb], axis=2)

    def off_bundle(dfield, fund, frames, eps, gram):
        """Normal components of ambient fields with the bundle part removed.

        dfield: (P, m, n + ell) ambient derivatives of the argument fields.
        Returns (P, n + ell, k) normal-frame coordinates.
        """
        nco = np.einsum("pma,mw,pwt->pat", dfield, gram, fund.normal_frame) * eps
        if ell:
            co = np.einsum("u,ptu,pat->pau", pat, frames * eps[:, None][None], nco)
            nco = nco - np.einsum("ptu,pau->pat", frames, co)
        return nco

    rows_all = np.zeros((p, n, n + ell, len(eps_l) + len(eps_r)))
    for i in range(n):
        d_l = grid_derivative(args_l, chart, i)   # (P, ml, n + ell)
        d_r = grid_derivative(args_r, chart, i)
        rows_all[:, i, :, : len(eps_l)] = off_bundle(
            d_l, fl, data.transfer_bundle, eps_l, gl
        )
        rows_all[:, i, :, len(eps_l):] = off_bundle(
            d_r, fr, data.transfer_bundle_right, eps_r, gr
        )

    scale = max(float(np.max(np.abs(rows_all))), 1.0)
    pts = np.flatnonzero(data.mask)
    dims = np.zeros(p, dtype=int)
    kers = {}
    for q in pts:
        rows = rows_all[q].transpose(0, 2, 1).reshape(-1, n + ell)
        _, sv, vt = np.linalg.svd(rows, full_matrices=True)
        rank = int(np.sum(sv > fd_tol * max(float(sv[0]) if sv.size else 0.0, scale)))
        ker = vt[rank:].T
        kers[int(q)] = ker
        dims[q] = ker.shape[1]
    if int(dims[pts].min()) != int(dims[pts].max()):
        raise RankJump(
            f"obstruction kernel dimension varies: {sorted(set(dims[pts].tolist()))}"
        )
    s_dim = int(dims[pts[0]])
    delta_raw = np.zeros((p, n + ell, s_dim))
    for q in pts:
        delta_raw[q] = kers[int(q)]
    mixed_eps = np.concatenate([np.ones(n), pat])
    delta, _, _ = align_frames(
        delta_raw, np.diag(mixed_eps), chart.shape, mask=data.mask, tol=tol * 10,
    ) if s_dim else (np.zeros((p, n + ell, 0)), (), 0.0)

    # rulings sit inside the kernel; the fiber part is their complement
    d = data.rulings.shape[2]
    rul_emb = np.zeros((p, n + ell, d))
    rul_emb[:, :n, :] = data.rulings
    gap = 0.0
    r_dim = max(s_dim - d, 0)
    fiber_spans = np.zeros((p, n + ell, r_dim))
    for q in pts:
        dq = delta[q]
        proj = dq @ np.linalg.pinv(dq)
        gap = max(gap, float(np.max(np.abs(rul_emb[q] - proj @ rul_emb[q]))) if d else 0.0)
        rows = (rul_emb[q] * mixed_eps[:, None]).T @ dq
        coeffs = np.linalg.svd(rows, full_matrices=True)[2][d:].T if d else np.eye(s_dim)
        fib = orthonormal_columns(dq @ coeffs, tol)
        fiber_spans[q, :, : fib.shape[1]] = fib[:, :r_dim]
    # smooth gauge for the fiber frames: the extension differentiates them
    fibers, _, _ = align_frames(
        fiber_spans, np.diag(mixed_eps), chart.shape, mask=data.mask, tol=tol * 10,
    ) if r_dim else (fiber_spans, (), 0.0)
    residuals = {
        "rulings_inside_kernel": gap,
        "rulings_integrability": float(np.max(bracket_residual(fl, _dist_of(data.rulings))))
        if d else 0.0,
    }
    # intersection of the kernel with the tangent block must be the rulings
    inter_gap = 0.0
    for q in pts:
        dq = delta[q]
        rows = dq[n:, :]  # bundle components must vanish
        coeffs = np.linalg.svd(rows, full_matrices=True)[2][_rank_of(rows, tol):].T if ell else np.eye(s_dim)
        tang = orthonormal_columns((dq @ coeffs)[:n, :], tol)
        inter_gap = max(inter_gap, _gap(tang, data.rulings[q]))
    residuals["kernel_meets_tangent_in_rulings"] = inter_gap
    return ObstructionData(data, delta, fibers, s_dim, max(s_dim - d, 0), residuals)


def _rank_of(mat: np.ndarray, tol: float) -> int:
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > tol * max(float(sv[0]), 1.0)))


def _kernel_cols_local(rows: np.ndarray, tol: float) -> np.ndarray:
    ncols = rows.shape[1]
    if rows.shape[0] == 0 or ncols == 0:
        return np.eye(ncols)
    _, sv, vt = np.linalg.svd(rows, full_matrices=True)
    rank = int(np.sum(sv > tol * max(float(sv[0]) if sv.size else 0.0, 1.0)))
    return vt[rank:].T


def _gap(a: np.ndarray, b: np.ndarray) -> float:
    pa = a @ a.T if a.size else np.zeros((b.shape[0], b.shape[0]))
    pb = b @ b.T if b.size else np.zeros_like(pa)
    return float(np.linalg.norm(pa - pb, ord=2)) if pa.size else 0.0


def _dist_of(rulings: np.ndarray):
    from .jets import DistributionFrame

    return DistributionFrame(rulings)


# ---------------------------------------------------------------------------
# the ruled extension itself
# ---------------------------------------------------------------------------


@dataclass
class ExtensionPair:
    left: ImmersionJet
    right: ImmersionJet
    base_left: ImmersionJet
    base_right: ImmersionJet
    fiber_fields_left: np.ndarray    # (P, ml, r) ambient fiber directions
    fiber_fields_right: np.ndarray
    radius: float
    obstruction: ObstructionData


def _extended_jet(base: ImmersionJet, fields: np.ndarray, chart_ext: ChartGrid, r: int) -> ImmersionJet:
    """Jets of (x, t) -> f(x) + sum_k t_k field_k(x) on the product grid."""
    chart = base.chart
    pb, n, m = chart.npoints, base.n, base.m
    fiber_shape = chart_ext.shape[n:]
    pf = int(np.prod(fiber_shape)) if r else 1
    taxes = [chart_ext.axis(n + k) for k in range(r)]
    tgrids = np.meshgrid(*taxes, indexing="ij") if r else []
    tflat = np.stack([t.reshape(-1) for t in tgrids], axis=1) if r else np.zeros((1, 0))

    dfields = np.stack([
        np.stack([grid_derivative(fields[:, :, k], chart, i) for i in range(n)], axis=1)
        for k in range(r)
    ], axis=3) if r else np.zeros((pb, n, m, 0))  # (P, i, m, k)
    d2fields = np.stack([
        np.stack([
            grid_derivative(dfields[:, i, :, :], chart, j) for j in range(n)
        ], axis=1)
        for i in range(n)
    ], axis=1) if r else np.zeros((pb, n, n, m, 0))  # (P, i, j, m, k)

    ntot = n + r
    ptot = pb * pf
    values = np.zeros((ptot, m))
    d1 = np.zeros((ptot, ntot, m))
    d2 = np.zeros((ptot, ntot, ntot, m))
    for w, tvec in enumerate(tflat):
        sl = slice(w, ptot, pf)  # C-order: fiber axes vary fastest
        if r and np.any(tvec != 0.0):
            values[sl] = base.values + np.einsum("pmk,k->pm", fields, tvec)
        else:
            values[sl] = base.values.copy()
        d1[sl, :n] = base.d1 + (np.einsum("pimk,k->pim", dfields, tvec) if r else 0.0)
        for k in range(r):
            d1[sl, n + k] = fields[:, :, k]
        d2[sl, :n, :n] = base.d2 + (np.einsum("pijmk,k->pijm", d2fields, tvec) if r else 0.0)
        for k in range(r):
            d2[sl, :n, n + k] = dfields[:, :, :, k].transpose(0, 1, 2)
            d2[sl, n + k, :n] = dfields[:, :, :, k]
        # second derivatives in the fiber directions vanish identically
    return ImmersionJet(chart_ext, base.ambient, values, d1, d2, None, source="assembled")


def ruled_extension(
    obstruction: ObstructionData,
    radius: float | None = None,
    samples: int = 3,
    max_shrink: int = 6,
    immersion_tol: float = 1e-7,
) -> ExtensionPair:
    """Extend both immersions by straight fibers along the kernel directions.

    The fiber radius starts at a tenth of the grid extent and is halved until
    both extended maps are immersions on the tube.
    """
    data = obstruction.data
    fl, fr = data.left, data.right
    chart = fl.jet.chart
    n = fl.metric.shape[1]
    r = obstruction.r
    if radius is None:
        radius = 0.1 * max(
            chart.spacing[i] * (chart.shape[i] - 1) for i in range(chart.ndim)
        )

    # ambient realizations of the fiber directions on both sides
    fib = obstruction.fibers
    lf_amb = np.einsum("pmt,ptu->pmu", fl.normal_frame, data.transfer_bundle)
    lh_amb = np.einsum("pmt,ptu->pmu", fr.normal_frame, data.transfer_bundle_right)
    lam_l = np.einsum("pma,pau->pmu", fl.tangent_ambient, fib[:, :n, :]) + np.einsum(
        "pmt,ptu->pmu", lf_amb, fib[:, n:, :]
    )
    lam_r = np.einsum("pma,pau->pmu", fr.tangent_ambient, fib[:, :n, :]) + np.einsum(
        "pmt,ptu->pmu", lh_amb, fib[:, n:, :]
    )

    for _ in range(max_shrink + 1):
        chart_ext = chart.with_extra_axes(
            (samples,) * r, (radius,) * r, (-radius * (samples // 2),) * r
        )
        jl = _extended_jet(fl.jet, lam_l, chart_ext, r)
        jr = _extended_jet(fr.jet, lam_r, chart_ext, r)
        if jl.immersion_residual() > immersion_tol and jr.immersion_residual() > immersion_tol:
            return ExtensionPair(jl, jr, fl.jet, fr.jet, lam_l, lam_r, radius, obstruction)
        radius *= 0.5
    raise NotImmersionAtRadius("extension never becomes an immersion while shrinking the fibers")


def verify_extension(pair: ExtensionPair, fd_tol: float = 1e-6, margin: int = 2) -> dict:
    """Residual report for the extension: isometry, ruledness, splittings,
    the kernel identity, and the compatibility conditions on the tube.

    The lifted kernel directions are taken in chart coordinates (base ruling
    components plus the fiber axes), which matches the affine leaves exactly
    at the zero section and on all the gallery geometries.
    """
    data = pair.obstruction.data
    n = data.left.metric.shape[1]
    r = pair.obstruction.r
    pf = int(np.prod(pair.left.chart.shape[n:])) if r else 1
    out: dict = {"fiber_rank": r, "radius": pair.radius}

    # isometric extension: induced metrics agree on the tube
    gl = induced_metric(pair.left)
    gr = induced_metric(pair.right)
    out["metric_agreement"] = float(np.max(np.abs(gl - gr)))

    # zero section and straight fibers
    mid = (pf - 1) // 2 if pf > 1 else 0
    center = pair.obstruction.data.left.jet.values
    zero_slice = pair.left.values[mid::pf] if pf > 1 else pair.left.values
    out["zero_section_exact"] = bool(np.array_equal(zero_slice, center))
    straight = 0.0
    if r:
        for k in range(r):
            axis = n + k
            second = grid_derivative(pair.left.values, pair.left.chart, axis, order=2)
            straight = max(straight, float(np.max(np.abs(second))))
    out["fiber_straightness"] = straight

    fund_l = fundamental_data(pair.left)
    fund_r = fundamental_data(pair.right)
    eps_l_t = np.asarray(fund_l.normal_pattern, dtype=float)
    eps_r_t = np.asarray(fund_r.normal_pattern, dtype=float)
    gram_l = pair.left.ambient.gram
    gram_r = pair.right.ambient.gram

    # lifted kernel in tube chart coordinates
    p_ext = pair.left.chart.npoints
    d_rank = data.rulings.shape[2]
    lift = np.zeros((p_ext, n + r, d_rank + r))
    rul_coords = np.einsum("pia,pau->piu", data.left.tangent_frame, data.rulings)
    for w in range(pf):
        sl = slice(w, p_ext, pf)
        lift[sl, :n, :d_rank] = rul_coords
        for k in range(r):
            lift[sl, n + k, d_rank + k] = 1.0

    ell = data.ell
    lf_amb = np.einsum("pmt,ptu->pmu", data.left.normal_frame, data.transfer_bundle)
    lh_amb = np.einsum("pmt,ptu->pmu", data.right.normal_frame, data.transfer_bundle_right)
    mask_ext = np.ones(p_ext, dtype=bool)
    # frame-coordinate version of the lifted kernel for the residual helpers
    lift_frame_all = np.einsum("pai,piu->pau", fund_l.tangent_frame_inv, lift)

    # tube transfer bundles: intersections of the base bundles with the tube
    # normal spaces, found as coefficient kernels against the tube tangents
    r_tube = max(ell - r, 0)
    out["tube_bundle_rank_expected"] = r_tube
    lf_tube_raw = np.zeros((p_ext, fund_l.normal_rank, r_tube))
    lh_tube_raw = np.zeros((p_ext, fund_r.normal_rank, r_tube))
    rank_seen = set()
    right_tangency = 0.0
    for q in range(p_ext):
        qb = q // pf if pf > 1 else q
        if ell == 0:
            rank_seen.add(0)
            continue
        rows = pair.left.d1[q] @ gram_l @ lf_amb[qb]  # (n + r, ell)
        coeffs = _kernel_cols_local(rows, 1e-7)
        rank_seen.add(coeffs.shape[1])
        take = min(coeffs.shape[1], r_tube)
        amb_l = lf_amb[qb] @ coeffs[:, :take]
        amb_r = lh_amb[qb] @ coeffs[:, :take]
        right_tangency = max(
            right_tangency,
            float(np.max(np.abs(pair.right.d1[q] @ gram_r @ amb_r))) if take else 0.0,
        )
        lf_tube_raw[q, :, :take] = eps_l_t[:, None] * (
            fund_l.normal_frame[q].T @ (gram_l @ amb_l)
        )
        lh_tube_raw[q, :, :take] = eps_r_t[:, None] * (
            fund_r.normal_frame[q].T @ (gram_r @ amb_r)
        )
    out["tube_bundle_rank"] = max(rank_seen) if rank_seen else 0
    out["tube_bundle_rank_constant"] = len(rank_seen) == 1
    out["transferred_bundle_tangency"] = right_tangency

    if r_tube and out["tube_bundle_rank"] == r_tube:
        lf_tube, pat_tube, _ = align_frames(
            lf_tube_raw, np.diag(eps_l_t), pair.left.chart.shape, tol=1e-7
        )
        # transport the aligned left frames with the base identification
        lh_tube = np.zeros((p_ext, fund_r.normal_rank, r_tube))
        pat_l = np.asarray(data.transfer_pattern, dtype=float)
        eps_l_base = np.asarray(data.left.normal_pattern, dtype=float)
        for q in range(p_ext):
            qb = q // pf if pf > 1 else q
            amb = fund_l.normal_frame[q] @ lf_tube[q]  # (m, r_tube) in the left ambient
            base_co = np.einsum("tk,km->tm", data.transfer_bundle[qb].T * eps_l_base[None, :],
                                gram_l) @ amb
            base_co = pat_l[:, None] * base_co
            moved_amb = lh_amb[qb] @ base_co
            lh_tube[q] = eps_r_t[:, None] * (fund_r.normal_frame[q].T @ (gram_r @ moved_amb))
        ident_tube = np.einsum(
            "u,pku,pmu->pkm", np.asarray(pat_tube, dtype=float),
            lh_tube, lf_tube * eps_l_t[None, :, None],
        )
        compat = transfer_residuals(
            fund_l, fund_r, lf_tube, pat_tube, lh_tube, ident_tube,
            lift_frame_all, mask_ext, margin=margin,
        )
        out["tube_compatibility"] = compat
    else:
        lf_tube = np.zeros((p_ext, fund_l.normal_rank, 0))
        lh_tube = np.zeros((p_ext, fund_r.normal_rank, 0))
        pat_tube = ()
        ident_tube = np.zeros((p_ext, fund_r.normal_rank, fund_l.normal_rank))
        out["tube_compatibility"] = transfer_residuals(
            fund_l, fund_r, lf_tube, pat_tube, lh_tube, ident_tube,
            lift_frame_all, mask_ext, margin=margin,
        )

    # kernel identity: the lifted kernel equals the joint nullity against the
    # complements of the tube bundles
    gap_inc = 0.0
    alpha_l = fund_l.alpha
    alpha_r = fund_r.alpha
    for q in range(p_ext):
        kl_t = fund_l.normal_rank
        kr_t = fund_r.normal_rank
        lperp = _complement(lf_tube[q], np.eye(kl_t), eps_l_t)
        lperp_h = _complement(lh_tube[q], np.eye(kr_t), eps_r_t)
        rows = np.vstack([
            np.einsum("abt,t,tw->bwa", alpha_l[q], eps_l_t, lperp).reshape(-1, n + r),
            np.einsum("abt,t,tw->bwa", alpha_r[q], eps_r_t, lperp_h).reshape(-1, n + r),
        ])
        sv = np.linalg.svd(rows, compute_uv=False) if rows.size else np.zeros(0)
        scale = max(float(sv[0]) if sv.size else 0.0, 1.0)
        rank = int(np.sum(sv > fd_tol * scale))
        ker = np.linalg.svd(rows, full_matrices=True)[2][rank:].T if rows.size else np.eye(n + r)
        # compare in frame coordinates of the tube
        lift_frame = fund_l.tangent_frame_inv[q] @ lift[q]
        gap_inc = max(gap_inc, _gap(orthonormal_columns(ker, 1e-9),
                                    orthonormal_columns(lift_frame, 1e-9)))
    out["kernel_identity_gap"] = gap_inc

    # ruledness: the second fundamental forms of the tube vanish on the kernel
    res_ruled = 0.0
    for q in range(p_ext):
        lf_coords = fund_l.tangent_frame_inv[q] @ lift[q]  # (n + r, s) frame coords
        add = np.einsum("abt,au,bv->uvt", alpha_l[q], lf_coords, lf_coords)
        adr = np.einsum("abt,au,bv->uvt", alpha_r[q], lf_coords, lf_coords)
        res_ruled = max(res_ruled, float(np.max(np.abs(add))) if add.size else 0.0,
                        float(np.max(np.abs(adr))) if adr.size else 0.0)
    out["ruled_leaves"] = res_ruled

    # cone-branch consistency: both extensions keep equal squared norms
    if pair.left.ambient.pseudo_pair and pair.right.ambient.pseudo_pair:
        out["equal_norms"] = float(np.max(np.abs(
            pair.left.ambient.norm_sq(pair.left.values)
            - pair.right.ambient.norm_sq(pair.right.values)
        )))
    return out


def _complement(frames: np.ndarray, full: np.ndarray, eps: np.ndarray) -> np.ndarray:
    if frames.shape[1] == 0:
        return full
    rows = (frames * eps[:, None]).T @ full
    _, sv, vt = np.linalg.svd(rows, full_matrices=True)
    rank = int(np.sum(sv > 1e-9 * max(float(sv[0]), 1.0))) if sv.size else 0
    return orthonormal_columns(full @ vt[rank:].T, 1e-9)


# ---------------------------------------------------------------------------
# the light-cone slice generator
# ---------------------------------------------------------------------------


@dataclass
class SliceData:
    """A conformal pair manufactured by slicing a Lorentz embedding."""

    slice_chart: ChartGrid
    roots: np.ndarray            # (P_slice,) root parameter per slice point
    left: ImmersionJet           # the Euclidean immersion restricted to the slice
    projected: ImmersionJet      # the cone projection of the sliced Lorentz map
    lifted: ImmersionJet         # the sliced Lorentz map itself
    conformal_factor: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _norm_sq_jet(comps: list[Jet3], gram: np.ndarray) -> Jet3:
    acc = None
    m = len(comps)
    for a in range(m):
        for b in range(m):
            if gram[a, b] == 0.0:
                continue
            term = comps[a] * comps[b] * float(gram[a, b])
            acc = term if acc is None else acc + term
    return acc


def transversality_check(jet: ImmersionJet, threshold: float = 1e-6) -> dict:
    """Per-point transversality of an immersion to the light cone.

    Uses the differential of the squared norm; a vanishing value with a
    vanishing differential flags tangency (or containment in the cone).
    """
    g = jet.ambient.gram
    s = np.einsum("pa,ab,pb->p", jet.values, g, jet.values)
    ds = 2.0 * np.einsum("pia,ab,pb->pi", jet.d1, g, jet.values)
    grad_norm = np.linalg.norm(ds, axis=1)
    scale = max(float(np.max(np.abs(jet.values))), 1.0)
    on_cone = np.abs(s) < threshold * scale
    transversal = grad_norm > threshold * scale
    return {
        "values": s,
        "gradient_norms": grad_norm,
        "on_cone": on_cone,
        "transversal": transversal,
        "contained_in_cone": bool(np.all(np.abs(s) < 1e-10 * scale)),
    }


def generate_conformal_pair(
    left_map: ImmersionMap,
    lorentz_map: ImmersionMap,
    chart: ChartGrid,
    axis: int = 0,
    branch: int = 0,
    root_tol: float = 1e-12,
    isometry_tol: float = 1e-6,
    transversality_threshold: float = 1e-6,
) -> SliceData:
    """Slice a Lorentz embedding with the light cone and read off the pair.

    `left_map` and `lorentz_map` share the (n+1)-dimensional chart; the zero
    set of the squared norm of the Lorentz map is located along grid lines of
    `axis` (bracketing, then bisection polished by Newton), the slice is
    reparametrized by the remaining axes, and the conformal pair is the
    restriction of the left map together with the cone projection of the
    restricted Lorentz map.

    The two restrictions must induce the same metric on the slice: that is
    what makes the projected pair conformal.  Full-chart isometry of the
    inputs is not required (the slice is where the construction lives), but
    the residual is reported.
    """
    if not lorentz_map.ambient.pseudo_pair:
        raise ValueError("the second map must take values in a Lorentz ambient")
    n_plus = chart.ndim
    gram = lorentz_map.ambient.gram

    # scan the squared norm over the full chart
    pts_all = chart.points()
    vals = lorentz_map.values(pts_all)
    s_all = np.einsum("pa,ab,pb->p", vals, gram, vals)
    scale = max(float(np.max(np.abs(vals))), 1.0)
    if np.all(np.abs(s_all) < 1e-10 * scale):
        raise NotTransversal("the Lorentz map is contained in the cone: zero set is everything")

    shape = chart.shape
    axis_len = shape[axis]
    slice_shape = tuple(s for i, s in enumerate(shape) if i != axis)
    slice_spacing = tuple(s for i, s in enumerate(chart.spacing) if i != axis)
    slice_origin = tuple(o for i, o in enumerate(chart.origin) if i != axis)
    slice_chart = ChartGrid(slice_shape, slice_spacing, slice_origin)
    n_lines = slice_chart.npoints

    s_grid = s_all.reshape(shape)
    s_lines = np.moveaxis(s_grid, axis, -1).reshape(n_lines, axis_len)
    taxis = chart.axis(axis)

    lows = np.zeros(n_lines)
    highs = np.zeros(n_lines)
    for line in range(n_lines):
        sv = s_lines[line]
        brackets = []
        for k in range(axis_len - 1):
            if sv[k] == 0.0:
                brackets.append((taxis[k], taxis[k]))
            elif sv[k] * sv[k + 1] < 0:
                brackets.append((taxis[k], taxis[k + 1]))
        if sv[-1] == 0.0:
            brackets.append((taxis[-1], taxis[-1]))
        if len(brackets) <= branch:
            raise NoIntersection(
                f"line {line}: found {len(brackets)} roots, branch {branch} requested"
            )
        lows[line], highs[line] = brackets[branch]

    # vectorized bisection over all lines, then Newton polish
    slice_pts = slice_chart.points()

    def full_points(tvals: np.ndarray) -> np.ndarray:
        cols = []
        j = 0
        for i in range(n_plus):
            if i == axis:
                cols.append(tvals)
            else:
                cols.append(slice_pts[:, j])
                j += 1
        return np.stack(cols, axis=1)

    def s_of(tvals: np.ndarray, order: int = 0):
        comps = lorentz_map.evaluate(full_points(tvals), order=order)
        return _norm_sq_jet(comps, gram)

    lo, hi = lows.copy(), highs.copy()
    s_lo = s_of(lo).v
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        s_mid = s_of(mid).v
        left_mask = s_lo * s_mid <= 0
        hi = np.where(left_mask, mid, hi)
        lo = np.where(left_mask, lo, mid)
        s_lo = np.where(left_mask, s_lo, s_mid)
        if float(np.max(hi - lo)) < root_tol:
            break
    roots = 0.5 * (lo + hi)
    for _ in range(4):
        sj = s_of(roots, order=1)
        deriv = sj.g[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(deriv) > 1e-14, sj.v / deriv, 0.0)
        roots = np.clip(roots - step, lows, highs)

    # transversality along the located slice
    sj = s_of(roots, order=1)
    if float(np.max(np.abs(sj.v))) > 1e-8 * scale:
        raise NoIntersection("root polishing failed to land on the zero set")
    grad_norm = np.linalg.norm(sj.g, axis=1)
    axis_deriv = np.abs(sj.g[:, axis])
    if np.any(grad_norm < transversality_threshold * scale):
        raise NotTransversal("zero set touched with vanishing gradient")
    if np.any(axis_deriv < transversality_threshold * scale):
        raise NotTransversal("zero set is not a graph over the scan axis")

    # implicit jets of the root function t(u)
    sj2 = s_of(roots, order=2)
    others = [i for i in range(n_plus) if i != axis]
    s_t = sj2.g[:, axis]
    t_u = -sj2.g[:, others] / s_t[:, None]
    hess = sj2.h
    t_uu = -(
        hess[:, others][:, :, others]
        + np.einsum("pi,pj->pij", hess[:, others][:, :, axis], t_u)
        + np.einsum("pi,pj->pij", t_u, hess[:, others][:, :, axis])
        + hess[:, axis, axis][:, None, None] * np.einsum("pi,pj->pij", t_u, t_u)
    ) / s_t[:, None, None]

    n = n_plus - 1
    incl_d1 = np.zeros((n_lines, n_plus, n))
    incl_d2 = np.zeros((n_lines, n_plus, n, n))
    for col, i in enumerate(others):
        incl_d1[:, i, col] = 1.0
    incl_d1[:, axis, :] = t_u
    incl_d2[:, axis, :, :] = t_uu

    def restrict(mapping: ImmersionMap) -> ImmersionJet:
        comps = mapping.evaluate(full_points(roots), order=2)
        m = mapping.ambient.dim
        values = np.stack([c.v for c in comps], axis=-1)
        dfull = np.stack([c.g for c in comps], axis=-1)      # (P, n+1, m)
        d2full = np.stack([c.h for c in comps], axis=-1)     # (P, n+1, n+1, m)
        d1 = np.einsum("pAm,pAi->pim", dfull, incl_d1)
        d2 = np.einsum("pABm,pAi,pBj->pijm", d2full, incl_d1, incl_d1) + np.einsum(
            "pAm,pAij->pijm", dfull, incl_d2
        )
        return ImmersionJet(slice_chart, mapping.ambient, values, d1, d2, None,
                            source="assembled")

    left_slice = restrict(left_map)
    lifted_slice = restrict(lorentz_map)
    projected = cone_projection(lifted_slice)

    # the slice metrics of the two restrictions must agree
    g_left = induced_metric(left_slice)
    g_lift = induced_metric(lifted_slice)
    slice_gap = float(np.max(np.abs(g_left - g_lift)))
    if slice_gap > isometry_tol * max(float(np.max(np.abs(g_left))), 1.0):
        raise NotIsometricPair(
            f"restrictions induce different slice metrics: residual {slice_gap:.3e}"
        )

    phi, conf_resid = conformal_factor_of_metrics(g_left, induced_metric(projected))
    model = LightConeModel.for_ambient(lorentz_map.ambient)
    pair_e0 = lifted_slice.values @ (gram @ model.e0)
    factor_gap = float(np.max(np.abs(phi - 1.0 / pair_e0)))

    return SliceData(
        slice_chart=slice_chart,
        roots=roots,
        left=left_slice,
        projected=projected,
        lifted=lifted_slice,
        conformal_factor=phi,
        diagnostics={
            "slice_metric_gap": slice_gap,
            "conformal_residual": float(np.max(conf_resid)),
            "factor_vs_null_pairing": factor_gap,
            "min_axis_derivative": float(np.min(axis_deriv)),
            "min_gradient_norm": float(np.min(grad_norm)),
        },
    )
