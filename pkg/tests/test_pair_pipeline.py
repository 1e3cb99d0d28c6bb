import numpy as np
import pytest

from confpair import jet3
from confpair.errors import HypothesisOutOfRange, NotIsometricPair
from confpair.indefinite_linalg import ScalarProduct
from confpair.jets import ChartGrid, ImmersionJet, induced_metric
from confpair.lightcone import LightConeModel, isometric_representative
from confpair.pair_pipeline import (
    PipelineConfig,
    analyze_pair,
    build_joint,
    degeneracy_test,
    ruling_dimension_bound,
    verify_compatibility,
)

E3 = ScalarProduct.euclidean(3)
E4 = ScalarProduct.euclidean(4)


def rotation4(seed=11):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    return q


def sphere2_fn(radius=2.0):
    def fn(xs):
        th, ph = xs
        return [
            radius * jet3.cos(th),
            radius * jet3.sin(th) * jet3.cos(ph),
            radius * jet3.sin(th) * jet3.sin(ph),
        ]

    return fn


def congruent_pair(n_pts=9, h=0.015):
    grid = ChartGrid((n_pts, n_pts), (h, h), (0.9, 0.4))
    jf = ImmersionJet.from_function(sphere2_fn(), grid, E3)
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    shift = np.array([0.3, -1.0, 2.0])

    def moved(xs):
        comps = sphere2_fn()(xs)
        return [
            sum(float(q[r, c]) * comps[c] for c in range(3)) + float(shift[r])
            for r in range(3)
        ]

    jg = ImmersionJet.from_function(moved, grid, E3)
    return jf, jg


def flat_pair(n_pts=7, h=0.03):
    grid = ChartGrid((n_pts, n_pts, 5), (h, h, h), (0.1, -0.1, -0.06))

    def plane(xs):
        x1, x2, x3 = xs
        return [x1, x2, x3, jet3.constant(0.0, x1)]

    def cyl(xs):
        x1, x2, x3 = xs
        return [jet3.cos(x1), jet3.sin(x1), x2, x3]

    return (
        ImmersionJet.from_function(plane, grid, E4),
        ImmersionJet.from_function(cyl, grid, E4),
    )


def degenerate_reflection_pair(n_pts=7, h=0.02):
    """Cylinder vs the cone lift of a flat reflection of the same chart."""
    grid = ChartGrid((n_pts, n_pts, 5), (h, h, h), (0.3, -0.06, -0.04))

    def cyl(xs):
        x1, x2, x3 = xs
        return [jet3.cos(x1), jet3.sin(x1), x2, x3]

    jf = ImmersionJet.from_function(cyl, grid, E4)

    def reflected(xs):
        x1, x2, x3 = xs
        return [-x1, x2, x3]

    jbar = ImmersionJet.from_function(reflected, grid, E3)
    jhat, _ = isometric_representative(jbar, induced_metric(jf))
    return jf, jbar, jhat


def test_build_joint_rejects_nonisometric():
    jf, _ = flat_pair()

    def sphere_like(xs):
        x1, x2, x3 = xs
        return [2.0 * x1, x2, x3, jet3.constant(0.0, x1)]

    bad = ImmersionJet.from_function(sphere_like, jf.chart, E4)
    with pytest.raises(NotIsometricPair):
        build_joint(jf, bad)


def test_degeneracy_congruent_pair_is_nondegenerate():
    jf, jg = congruent_pair()
    joint = build_joint(jf, jg)
    deg = degeneracy_test(joint)
    assert not deg.degenerate.any()
    assert set(deg.omega_rank.tolist()) == {1}  # totally null graph of the congruence


def test_degeneracy_flat_pair_trivial_radical():
    jf, jg = flat_pair()
    deg = degeneracy_test(build_joint(jf, jg))
    assert set(deg.omega_rank.tolist()) == {0}
    assert not deg.degenerate.any()


def test_degeneracy_reflection_pair_finds_witness():
    jf, jbar, jhat = degenerate_reflection_pair()
    joint = build_joint(jf, jhat)
    deg = degeneracy_test(joint)
    assert deg.degenerate.all()
    assert set(deg.left_kernel_rank.tolist()) == {1}
    assert np.allclose(deg.witness_pairing, 1.0)
    # the rescaled witness pairs to one with the right position vector
    pos = joint.right.normal_coordinates(joint.right.jet.values)
    vals = np.einsum("pt,t,pt->p", pos, joint.eps_right, deg.witness)
    assert np.max(np.abs(vals - 1.0)) < 1e-9


def test_congruent_pair_full_pipeline():
    jf, jg = congruent_pair()
    analysis = analyze_pair(jf, jg)
    assert len(analysis.regions) == 1
    st = analysis.regions[0]
    assert st.branch == "nondegenerate"
    assert st.ranks["omega"] == 1
    assert st.ranks["private_left"] == 0
    assert st.ranks["private_right"] == 0
    assert st.ranks["theta"] == 2
    assert st.ranks["shared_span"] == 1
    assert st.ranks["matched_span"] == 1
    assert st.ranks["transfer_bundle"] == 1  # full normal bundles (p = 1)
    assert st.ranks["rulings"] == 2  # D = TM
    assert st.residuals["identification_isometry"] < 1e-9
    assert st.residuals["shared_sff_match"] < 1e-9
    assert st.residuals["omega_isotropy"] < 1e-10
    compat = verify_compatibility(st)
    assert compat["transfer_preserves_sff"] < 1e-8
    assert compat["transfer_parallel"] < 1e-8
    assert compat["bundle_parallel_along_rulings"] < 1e-8


def test_flat_pair_pipeline_rulings():
    jf, jg = flat_pair()
    analysis = analyze_pair(jf, jg)
    assert len(analysis.regions) == 1
    st = analysis.regions[0]
    assert st.branch == "nondegenerate"
    assert st.ranks["omega"] == 0
    assert st.ranks["private_right"] == 1
    assert st.ranks["theta"] == 2
    assert st.ranks["transfer_bundle"] == 0
    assert st.ranks["rulings"] == 2  # the common straight rulings
    # rulings kill the first coordinate direction
    rc = np.einsum("pia,pau->piu", st.left.tangent_frame, st.rulings)
    assert np.max(np.abs(rc[:, 0, :])) < 1e-8


def test_degenerate_pipeline_claims_and_ranks():
    jf, jbar, jhat = degenerate_reflection_pair()
    analysis = analyze_pair(jf, jhat)
    assert analysis.lifted_left is not None
    assert len(analysis.regions) == 1
    st = analysis.regions[0]
    assert st.branch == "degenerate"
    assert st.ranks["omega"] == 2
    assert st.ranks["private_left"] == 1
    assert st.ranks["private_right"] == 0
    assert st.ranks["theta"] == 2
    assert st.ranks["shared_span"] == 2
    assert st.ranks["matched_span"] == 2
    assert st.ranks["transfer_bundle"] == 2
    assert st.ranks["rulings"] == 2
    for name, claim in st.claims.items():
        assert claim["passed"], f"claim {name} failed: {claim}"
    assert st.claims["shared_span_lorentzian"]["signature"] == (1, 1, 0)
    assert st.claims["cone_position_sff_identity"]["residual"] < 1e-6
    compat = verify_compatibility(st)
    assert compat["transfer_preserves_sff"] < 1e-7
    assert compat["transfer_parallel"] < 1e-7
    assert compat["bundle_parallel_along_rulings"] < 1e-7


def test_corrupted_identification_blows_up_sff_residual():
    jf, jg = congruent_pair()
    analysis = analyze_pair(jf, jg)
    st = analysis.regions[0]
    base = verify_compatibility(st)["transfer_preserves_sff"]
    st.identification = -st.identification  # a sign flip on a line bundle
    corrupted = verify_compatibility(st)["transfer_preserves_sff"]
    assert corrupted > max(base, 1e-12) * 1e3


def test_ruling_dimension_bound_arithmetic():
    chk = ruling_dimension_bound("nondegenerate", n=8, p=2, q=2, a=0, b=0, ell=1, d=7, r=0)
    assert chk.rhs == 7 and chk.passed and chk.slack == 0
    chk = ruling_dimension_bound("nondegenerate", n=7, p=2, q=2, a=0, b=0, ell=0, d=3, r=0)
    assert chk.rhs == 3 and chk.passed
    chk = ruling_dimension_bound("degenerate", n=9, p=1, q=1, ell=2, d=7, r=2, a=0, b=1)
    assert chk.rhs == 9 and chk.lhs == 9 and chk.passed
    with pytest.raises(HypothesisOutOfRange):
        ruling_dimension_bound("nondegenerate", n=4, p=2, q=2, a=0, b=0, ell=0, d=1, r=0)


def test_borderline_index_shift_weakens_bound():
    chk = ruling_dimension_bound("nondegenerate", n=14, p=6, q=6, a=0, b=0, ell=0, d=1, r=0)
    assert chk.rhs == 14 - 12 - 1
    assert "weakened" in chk.notes


def test_same_jet_twice_gives_totally_null_joint_span():
    jf, _ = flat_pair()
    # use the curved member so the curvature span is nonzero
    _, jg = flat_pair()
    joint = build_joint(jg, jg)
    deg = degeneracy_test(joint)
    # the joint span is the graph of the identity: totally null radical
    assert set(deg.omega_rank.tolist()) == {1}
    assert not deg.degenerate.any()
    analysis = analyze_pair(jg, jg)
    st = analysis.regions[0]
    assert st.residuals["omega_isotropy"] < 1e-12
    assert st.ranks["rulings"] == 3  # full tangent space
