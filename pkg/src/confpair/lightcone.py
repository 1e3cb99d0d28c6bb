"""The Lorentzian light-cone model of conformal geometry.

Euclidean space R^N sits isometrically inside the light cone of the
(N+2)-dimensional Lorentz space through the quadratic chart

    x  |->  -|x|^2/2 e0 + e1 + sum_i x_i e_{i+1},

written in a pseudo-orthonormal basis with <e0,e0> = <e1,e1> = 0 and
<e0,e1> = 1.  Rescaling a conformal immersion by the inverse conformal
factor turns it into an isometric immersion into the cone; projecting a
cone-valued immersion back recovers a Euclidean representative of its
conformal class.  This module implements those maps on whole 3-jets, plus
the residual checks that tie the second fundamental forms of the two
pictures together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotConformal, NotConformallyRuled, OnExceptionalRay
from .indefinite_linalg import ScalarProduct
from .jet3 import Jet3
from .jets import (
    ChartGrid,
    DistributionFrame,
    FundamentalData,
    ImmersionJet,
    christoffel,
    conformal_factor_of_metrics,
    fundamental_data,
    induced_metric,
    leaf_mean_curvature,
    scalar_fd_jets,
)

__all__ = [
    "LightConeModel",
    "scalar_jet",
    "scale_jet",
    "isometric_representative",
    "cone_projection",
    "position_identities",
    "SffTransferData",
    "sff_transfer_check",
]


@dataclass(frozen=True)
class LightConeModel:
    """Bookkeeping for the cone over R^n_euclidean."""

    n_euclidean: int

    @property
    def ambient(self) -> ScalarProduct:
        return ScalarProduct.lightcone(self.n_euclidean)

    @property
    def dim(self) -> int:
        return self.n_euclidean + 2

    @property
    def e0(self) -> np.ndarray:
        v = np.zeros(self.dim)
        v[0] = 1.0
        return v

    @property
    def e1(self) -> np.ndarray:
        v = np.zeros(self.dim)
        v[1] = 1.0
        return v

    @staticmethod
    def for_ambient(ambient: ScalarProduct) -> "LightConeModel":
        if not ambient.pseudo_pair:
            raise ValueError("ambient does not carry the null-pair convention")
        return LightConeModel(ambient.dim - 2)

    # -- pointwise maps -------------------------------------------------

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Isometric chart of R^N inside the cone; x has shape (..., N)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.dim,))
        out[..., 0] = -0.5 * np.sum(x * x, axis=-1)
        out[..., 1] = 1.0
        out[..., 2:] = x
        return out

    def embed_differential(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(x, v).shape[:-1] + (self.dim,))
        out[..., 0] = -np.sum(x * v, axis=-1)
        out[..., 2:] = v
        return out

    def embed_second(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Constant second derivative of the chart: -<u,v> e0."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(u, v).shape[:-1] + (self.dim,))
        out[..., 0] = -np.sum(u * v, axis=-1)
        return out

    # -- jet-level maps -------------------------------------------------

    def lift_jet(self, jet: ImmersionJet) -> ImmersionJet:
        """Compose an R^N-valued jet with the cone chart, exactly."""
        if jet.ambient.dim != self.n_euclidean or jet.ambient.index != 0:
            raise ValueError("jet must map into the Euclidean base of this model")
        p, n = jet.chart.npoints, jet.n
        f, d1, d2, d3 = jet.values, jet.d1, jet.d2, jet.d3
        # scalar q = |f|^2 / 2 with exact derivatives from the jet
        q = 0.5 * np.einsum("pc,pc->p", f, f)
        qg = np.einsum("pc,pic->pi", f, d1)
        qh = np.einsum("pic,pjc->pij", d1, d1) + np.einsum("pc,pijc->pij", f, d2)
        qt = None
        if d3 is not None:
            cross = np.einsum("pijc,pkc->pijk", d2, d1)
            qt = (
                cross
                + cross.transpose(0, 1, 3, 2)
                + cross.transpose(0, 3, 1, 2)
                + np.einsum("pc,pijkc->pijk", f, d3)
            )
        m = self.dim
        values = np.zeros((p, m))
        values[:, 0] = -q
        values[:, 1] = 1.0
        values[:, 2:] = f
        nd1 = np.zeros((p, n, m))
        nd1[:, :, 0] = -qg
        nd1[:, :, 2:] = d1
        nd2 = np.zeros((p, n, n, m))
        nd2[:, :, :, 0] = -qh
        nd2[:, :, :, 2:] = d2
        nd3 = None
        if d3 is not None:
            nd3 = np.zeros((p, n, n, n, m))
            nd3[..., 0] = -qt
            nd3[..., 2:] = d3
        return ImmersionJet(jet.chart, self.ambient, values, nd1, nd2, nd3, source=jet.source)


# ---------------------------------------------------------------------------
# scalar-jet helpers
# ---------------------------------------------------------------------------


def scalar_jet(values: np.ndarray, chart: ChartGrid, order: int = 3) -> Jet3:
    """Jets of a sampled scalar field, derivatives by grid stencils."""
    d1, d2, d3 = scalar_fd_jets(np.asarray(values, dtype=float), chart, order=order)
    return Jet3(np.asarray(values, dtype=float), d1, d2, d3, nvars=chart.ndim)


def scale_jet(jet: ImmersionJet, s: Jet3) -> ImmersionJet:
    """Jet of the pointwise product s(x) F(x) by the Leibniz rule."""
    f, d1, d2, d3 = jet.values, jet.d1, jet.d2, jet.d3
    values = s.v[:, None] * f
    nd1 = s.g[:, :, None] * f[:, None, :] + s.v[:, None, None] * d1
    sym_sg = s.g[:, :, None, None] * d1[:, None, :, :]
    nd2 = (
        s.h[:, :, :, None] * f[:, None, None, :]
        + sym_sg
        + sym_sg.transpose(0, 2, 1, 3)
        + s.v[:, None, None, None] * d2
    )
    nd3 = None
    if d3 is not None and s.t is not None:
        hf = s.h[:, :, :, None, None] * d1[:, None, None, :, :]  # s_ij F_k
        gf2 = s.g[:, :, None, None, None] * d2[:, None, :, :, :]  # s_i F_jk
        nd3 = (
            s.t[..., None] * f[:, None, None, None, :]
            + hf
            + hf.transpose(0, 1, 3, 2, 4)
            + hf.transpose(0, 3, 1, 2, 4)
            + gf2
            + gf2.transpose(0, 2, 1, 3, 4)
            + gf2.transpose(0, 2, 3, 1, 4)
            + s.v[:, None, None, None, None] * d3
        )
    return ImmersionJet(jet.chart, jet.ambient, values, nd1, nd2, nd3, source="assembled")


def _pair_with(jet: ImmersionJet, vector: np.ndarray) -> Jet3:
    """Jets of the scalar <F(x), w> for a constant ambient vector w."""
    w = jet.ambient.gram @ np.asarray(vector, dtype=float)
    return Jet3(
        jet.values @ w,
        jet.d1 @ w,
        jet.d2 @ w,
        None if jet.d3 is None else jet.d3 @ w,
        nvars=jet.n,
    )


# ---------------------------------------------------------------------------
# the conformal <-> isometric dictionary
# ---------------------------------------------------------------------------


def isometric_representative(
    jet: ImmersionJet,
    base_metric: np.ndarray,
    factor: Jet3 | None = None,
    tol: float = 1e-6,
):
    """Rescaled cone lift of a conformal immersion, isometric for `base_metric`.

    Returns (lifted jet, factor jets).  The conformal factor relating the
    immersion's metric to the base is computed pointwise; its derivatives
    come from grid stencils unless closed-form `factor` jets are supplied.
    """
    phi, _ = conformal_factor_of_metrics(base_metric, induced_metric(jet), tol)
    if factor is None:
        factor = scalar_jet(phi, jet.chart, order=3 if jet.d3 is not None else 2)
    else:
        if float(np.max(np.abs(factor.v - phi))) > tol * float(np.max(np.abs(phi))):
            raise NotConformal("supplied factor jets disagree with the metric ratio")
    model = LightConeModel(jet.ambient.dim)
    lifted = model.lift_jet(jet)
    mu = factor.reciprocal()
    out = scale_jet(lifted, mu)
    if jet.source == "closed-form":
        out.source = "assembled"
    return out, factor


def cone_projection(jet: ImmersionJet, tol: float = 1e-9) -> ImmersionJet:
    """Euclidean representative of a cone-valued immersion.

    The rescaling <g,e0>^{-1} g lands on the isometric copy of R^N inside
    the cone; reading off the orthonormal components gives the projection.
    """
    model = LightConeModel.for_ambient(jet.ambient)
    s = _pair_with(jet, model.e0)
    if np.any(s.v <= tol):
        raise OnExceptionalRay("pairing with the null generator is not positive on the grid")
    w = scale_jet(jet, s.reciprocal())
    ambient = ScalarProduct.euclidean(model.n_euclidean)
    return ImmersionJet(
        jet.chart,
        ambient,
        w.values[:, 2:].copy(),
        w.d1[:, :, 2:].copy(),
        w.d2[:, :, :, 2:].copy(),
        None if w.d3 is None else w.d3[..., 2:].copy(),
        source="assembled",
    )


def position_identities(
    jet: ImmersionJet,
    fund: FundamentalData | None = None,
    normal_field: np.ndarray | None = None,
) -> dict:
    """Residuals of the cone-position shape-operator identities.

    For an isometric immersion into the cone, the position vector is a
    normal field whose shape operator is -I, and the null generator (or a
    supplied witness field) has vanishing shape operator.
    """
    model = LightConeModel.for_ambient(jet.ambient)
    if fund is None:
        fund = fundamental_data(jet)
    g_amb = jet.ambient.gram
    n = jet.n

    def shape_vs(vfield: np.ndarray) -> np.ndarray:
        # <alpha(E_a, E_b), v> via the ambient-coordinate form
        paired = np.einsum("pijm,mn,p...n->pij", fund.alpha_ambient, g_amb,
                           np.broadcast_to(vfield, (jet.chart.npoints, jet.m)))
        return np.einsum("pia,pjb,pij->pab", fund.tangent_frame, fund.tangent_frame, paired)

    def tangency(vfield: np.ndarray) -> float:
        comp = np.einsum("pma,mn,p...n->pa", fund.tangent_ambient, g_amb,
                         np.broadcast_to(vfield, (jet.chart.npoints, jet.m)))
        return float(np.max(np.abs(comp)))

    on_cone = float(np.max(np.abs(jet.ambient.norm_sq(jet.values))))
    a_pos = shape_vs(jet.values)
    res_pos = float(np.max(np.abs(a_pos + np.eye(n)[None])))
    vfield = model.e0 if normal_field is None else np.asarray(normal_field, dtype=float)
    res_field = float(np.max(np.abs(shape_vs(vfield))))
    return {
        "on_cone": on_cone,
        "position_is_normal": tangency(jet.values),
        "field_is_normal": tangency(vfield),
        "shape_of_position_plus_identity": res_pos,
        "shape_of_field": res_field,
    }


# ---------------------------------------------------------------------------
# second-fundamental-form transfer
# ---------------------------------------------------------------------------


@dataclass
class SffTransferData:
    """Both sides of the conformal/isometric curvature dictionary."""

    phi: np.ndarray                 # (P,)
    hess_factor: np.ndarray         # (P,) the proportionality scalar on the rulings
    xi: np.ndarray                  # (P, N+2)
    eta: np.ndarray                 # (P, n+p) leaf mean curvature of the conformal map
    eta_lift: np.ndarray            # (P, N+2) leaf mean curvature of the cone lift
    residuals: dict = field(default_factory=dict)


def _distribution_for(fund: FundamentalData, coord_spans: np.ndarray) -> DistributionFrame:
    basis = fund.coords_to_frame(coord_spans.transpose(0, 2, 1)).transpose(0, 2, 1)
    out = np.zeros_like(basis)
    for q in range(basis.shape[0]):
        qmat, _ = np.linalg.qr(basis[q])
        out[q] = qmat
    return DistributionFrame(out)


def sff_transfer_check(
    jet: ImmersionJet,
    base,
    ruling_axes: list[int] | np.ndarray,
    factor: Jet3 | None = None,
    umbilic_tol: float = 1e-4,
) -> SffTransferData:
    """Compare the cone lift's second fundamental form with its prediction.

    The left side uses only jets of the rescaled lift; the right side uses
    jets of the conformal immersion plus the Hessian of the factor in the
    base metric.  `base` is the isometric partner jet (preferred, its
    Christoffel symbols are then exact) or a plain (P, n, n) metric field.
    `ruling_axes` selects chart axes spanning the ruling distribution, or a
    (P, n, d) array of coordinate components.
    """
    chart = jet.chart
    p, n = chart.npoints, jet.n
    if isinstance(base, ImmersionJet):
        base_metric = induced_metric(base)
        gamma = christoffel(base, base_metric)
    else:
        base_metric = np.asarray(base, dtype=float)
        gamma = None
    lift, factor = isometric_representative(jet, base_metric, factor)
    model = LightConeModel(jet.ambient.dim)
    fund = fundamental_data(jet)
    fund_lift = fundamental_data(lift)

    if isinstance(ruling_axes, np.ndarray):
        coord_spans = ruling_axes
    else:
        coord_spans = np.zeros((p, n, len(ruling_axes)))
        for col, ax in enumerate(ruling_axes):
            coord_spans[:, ax, col] = 1.0
    dist_conformal = _distribution_for(fund, coord_spans)
    dist_lift = _distribution_for(fund_lift, coord_spans)

    # conformally-ruled precondition for the lift: umbilic leaves
    eta_lift_frame = leaf_mean_curvature(fund_lift, dist_lift)
    d = dist_lift.dim
    alpha_dd = np.einsum("pau,pbv,pabt->puvt", dist_lift.basis, dist_lift.basis, fund_lift.alpha)
    umb = alpha_dd - np.eye(d)[None, :, :, None] * eta_lift_frame[:, None, None, :]
    umbilic_residual = float(np.max(np.abs(umb))) if umb.size else 0.0
    if umbilic_residual > umbilic_tol:
        raise NotConformallyRuled(
            f"lift is not umbilic along the rulings: residual {umbilic_residual:.3e}"
        )

    # The dictionary is written for the factor relating the conformal metric
    # to the lift metric the other way around: metric(lift) = phi^2 metric(f).
    if factor.h is None:
        raise ValueError("factor jets must carry second derivatives")
    psi = factor.reciprocal()
    dpsi = psi.g
    if gamma is None:
        from .jets import grid_derivative

        dg = np.stack([grid_derivative(base_metric, chart, i) for i in range(n)], axis=1)
        ginv = np.linalg.inv(base_metric)
        sym = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)
        gamma = 0.5 * np.einsum("pkl,pijl->pkij", ginv, sym)
    hess = psi.h - np.einsum("pkij,pk->pij", gamma, dpsi)
    ginv = np.linalg.inv(base_metric)
    grad = np.einsum("pij,pj->pi", ginv, dpsi)

    phi = psi.v
    inv_phi = 1.0 / phi
    f_vals = jet.values
    # xi = phi^{-1} e0 - dPsi(df(grad phi))
    df_grad = np.einsum("pim,pi->pm", jet.d1, grad)
    xi = inv_phi[:, None] * model.e0[None, :] - model.embed_differential(f_vals, df_grad)

    # left side: second fundamental form of the lift, ambient coordinates
    lhs = fund_lift.alpha_ambient  # (P, n, n, N+2)
    # right side: dPsi(phi alpha_f) - g'_ij xi + phi^{-1} Hess_ij f'
    alpha_f = fund.alpha_ambient  # (P, n, n, n+p)
    rhs = model.embed_differential(
        f_vals[:, None, None, :], phi[:, None, None, None] * alpha_f
    )
    rhs -= base_metric[:, :, :, None] * xi[:, None, None, :]
    rhs += (inv_phi[:, None, None] * hess)[:, :, :, None] * lift.values[:, None, None, :]
    res_sff = float(np.max(np.abs(lhs - rhs)))

    # proportionality scalar on the rulings: Hess phi = lam <,>' there
    span_coord = np.einsum("pia,pau->piu", fund_lift.tangent_frame, dist_lift.basis)
    h_dd = np.einsum("piu,pjv,pij->puv", span_coord, span_coord, hess)
    g_dd = np.einsum("piu,pjv,pij->puv", span_coord, span_coord, base_metric)
    lam = np.einsum("puv,puv->p", h_dd, g_dd) / np.einsum("puv,puv->p", g_dd, g_dd)
    lam_residual = float(np.max(np.abs(h_dd - lam[:, None, None] * g_dd)))

    # mean-curvature dictionary along the rulings
    eta_frame = leaf_mean_curvature(fund, dist_conformal)
    eta_amb = fund.normal_ambient(eta_frame)
    eta_lift_amb = fund_lift.normal_ambient(eta_lift_frame)
    predicted = inv_phi[:, None] * (
        model.embed_differential(f_vals, eta_amb)
        - phi[:, None] * xi
        + lam[:, None] * lift.values
    )
    res_eta = float(np.max(np.abs(eta_lift_amb - predicted)))

    # umbilic-corrected forms on both sides
    beta_f = alpha_f - fund.metric[:, :, :, None] * eta_amb[:, None, None, :]
    beta_lift = fund_lift.alpha_ambient - base_metric[:, :, :, None] * eta_lift_amb[:, None, None, :]
    corr = hess - lam[:, None, None] * base_metric
    beta_rhs = model.embed_differential(f_vals[:, None, None, :], phi[:, None, None, None] * beta_f)
    beta_rhs += (inv_phi[:, None, None] * corr)[:, :, :, None] * lift.values[:, None, None, :]
    res_beta = float(np.max(np.abs(beta_lift - beta_rhs)))

    return SffTransferData(
        phi=phi,
        hess_factor=lam,
        xi=xi,
        eta=eta_amb,
        eta_lift=eta_lift_amb,
        residuals={
            "umbilic": umbilic_residual,
            "sff_dictionary": res_sff,
            "mean_curvature_dictionary": res_eta,
            "corrected_sff_dictionary": res_beta,
            "hess_proportionality": lam_residual,
        },
    )
