import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confpair.errors import DegenerateSubspace
from confpair.indefinite_linalg import (
    BilinearSample,
    ScalarProduct,
    Subspace,
    intersect,
    nullity_space,
    orthogonal_projection,
    radical,
    span_of_image,
)

from oracles import rational_intersection_dim, rational_rank, rational_signature

LORENTZ2 = ScalarProduct.lorentz(2)
RNG = np.random.default_rng(20240811)


def lightcone_null_pair(dim=4):
    sp = ScalarProduct.lightcone(dim - 2)
    e0 = np.zeros(dim)
    e0[0] = 1.0
    e1 = np.zeros(dim)
    e1[1] = 1.0
    return sp, e0, e1


def test_lightcone_gram_conventions():
    sp, e0, e1 = lightcone_null_pair(5)
    assert sp.inner(e0, e0) == 0
    assert sp.inner(e1, e1) == 0
    assert sp.inner(e0, e1) == 1
    assert sp.index == 1


def test_span_of_zero_form_is_zero_subspace():
    target = ScalarProduct.euclidean(3)
    beta = BilinearSample(target, np.zeros((2, 2, 3)), symmetric=True)
    assert span_of_image(beta).rank == 0


def test_span_of_rank_one_form():
    target = ScalarProduct.euclidean(4)
    w = np.array([1.0, 2.0, 0.0, -1.0])
    vals = np.zeros((3, 3, 4))
    for i in range(3):
        vals[i, i] = w
    sub = span_of_image(BilinearSample(target, vals, symmetric=True))
    assert sub.rank == 1
    assert sub.contains(w)


def test_span_rank_matches_rational_oracle_on_random_integer_forms():
    target = ScalarProduct.euclidean(5)
    for _ in range(20):
        r = int(RNG.integers(1, 4))
        left = RNG.integers(-3, 4, size=(3 * 3, r))
        right = RNG.integers(-3, 4, size=(r, 5))
        vals = (left @ right).reshape(3, 3, 5).astype(float)
        sub = span_of_image(BilinearSample(target, vals))
        assert sub.rank == rational_rank(vals.reshape(-1, 5))


def test_nullity_of_zero_form_is_everything():
    target = ScalarProduct.euclidean(3)
    beta = BilinearSample(target, np.zeros((4, 2, 3)))
    t_sub = Subspace.full(target)
    assert nullity_space(beta, t_sub).rank == 4


def test_nullity_with_zero_constraint_space_is_everything():
    target = ScalarProduct.euclidean(3)
    vals = RNG.normal(size=(4, 2, 3))
    assert nullity_space(BilinearSample(target, vals), Subspace.zero(target)).rank == 4


def test_radical_riemannian_is_zero():
    amb = ScalarProduct.euclidean(4)
    sub = Subspace.from_spanning(amb, RNG.normal(size=(4, 2)))
    assert radical(sub).rank == 0


def test_radical_null_line_is_itself():
    sp, e0, _ = lightcone_null_pair(4)
    sub = Subspace.from_spanning(sp, e0[:, None])
    rad = radical(sub)
    assert rad.rank == 1
    assert rad.contains(e0)


def test_radical_mixed_null_plus_spacelike():
    sp, e0, _ = lightcone_null_pair(4)
    u = np.zeros(4)
    u[2] = 1.0  # unit spacelike, orthogonal to the null pair
    sub = Subspace.from_spanning(sp, np.stack([e0, u], axis=1))
    rad = radical(sub)
    assert rad.rank == 1
    assert rad.contains(e0)
    assert not rad.contains(u)


def test_projection_fixes_members_and_kills_orthogonals():
    amb = ScalarProduct.euclidean(5)
    basis = RNG.normal(size=(5, 2))
    sub = Subspace.from_spanning(amb, basis)
    v = basis @ RNG.normal(size=2)
    assert np.allclose(orthogonal_projection(sub, v), v)
    w = RNG.normal(size=5)
    w_perp = w - orthogonal_projection(sub, w)
    assert np.allclose(orthogonal_projection(sub, w_perp), 0.0)


def test_projection_onto_timelike_line_in_lorentz_plane():
    u = np.array([2.0, 1.0])  # <u,u> = -4+1 = -3, timelike
    sub = Subspace.from_spanning(LORENTZ2, u[:, None])
    v = RNG.normal(size=2)
    pv = orthogonal_projection(sub, v)
    assert abs(LORENTZ2.inner(v - pv, u)) < 1e-12


def test_projection_rejects_degenerate_target():
    sp, e0, _ = lightcone_null_pair(4)
    sub = Subspace.from_spanning(sp, e0[:, None])
    with pytest.raises(DegenerateSubspace):
        orthogonal_projection(sub, np.ones(4))


def test_intersect_self_and_complementary():
    amb = ScalarProduct.euclidean(4)
    u = Subspace.from_spanning(amb, RNG.normal(size=(4, 2)))
    assert intersect(u, u).rank == 2
    a = Subspace.from_spanning(amb, np.eye(4)[:, :2])
    b = Subspace.from_spanning(amb, np.eye(4)[:, 2:])
    assert intersect(a, b).rank == 0


def test_intersect_planted_two_dimensional():
    amb = ScalarProduct.euclidean(6)
    common = RNG.integers(-3, 4, size=(6, 2)).astype(float)
    extra_u = RNG.integers(-3, 4, size=(6, 1)).astype(float)
    extra_v = RNG.integers(-3, 4, size=(6, 1)).astype(float)
    bu = np.hstack([common, extra_u])
    bv = np.hstack([common, extra_v])
    u = Subspace.from_spanning(amb, bu)
    v = Subspace.from_spanning(amb, bv)
    assert intersect(u, v).rank == rational_intersection_dim(bu, bv)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 3), st.data())
def test_signature_matches_rational_oracle(dim, index, data):
    idx = min(index, dim)
    sig = tuple([-1] * idx + [1] * (dim - idx))
    amb = ScalarProduct.from_pattern(sig)
    k = data.draw(st.integers(1, dim))
    entries = data.draw(
        st.lists(st.lists(st.integers(-3, 3), min_size=k, max_size=k), min_size=dim, max_size=dim)
    )
    basis = np.array(entries, dtype=float)
    if rational_rank(basis.T) != k:
        return  # only compare on full-rank spans
    sub = Subspace.from_spanning(amb, basis)
    gram_exact = basis.T @ np.diag(sig) @ basis
    assert sub.signature() == rational_signature(gram_exact.astype(int))


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_signature_invariant_under_basis_remix(data):
    amb = ScalarProduct.from_pattern((-1, -1, 1, 1, 1))
    entries = data.draw(
        st.lists(st.lists(st.integers(-3, 3), min_size=3, max_size=3), min_size=5, max_size=5)
    )
    basis = np.array(entries, dtype=float)
    sub = Subspace.from_spanning(amb, basis)
    if sub.rank != 3:
        return
    mix = RNG.normal(size=(3, 3)) + 3 * np.eye(3)
    remixed = Subspace.from_spanning(amb, sub.basis @ mix)
    assert remixed.signature() == sub.signature()


def test_projection_idempotent_and_self_adjoint():
    amb = ScalarProduct.from_pattern((-1, 1, 1, 1))
    for _ in range(10):
        basis = RNG.normal(size=(4, 2))
        sub = Subspace.from_spanning(amb, basis)
        if not sub.is_nondegenerate():
            continue
        v, w = RNG.normal(size=4), RNG.normal(size=4)
        pv = orthogonal_projection(sub, v)
        assert np.allclose(orthogonal_projection(sub, pv), pv, atol=1e-10)
        lhs = amb.inner(pv, w)
        rhs = amb.inner(v, orthogonal_projection(sub, w))
        assert abs(lhs - rhs) < 1e-10


def test_cylinder_sff_nullity_is_ruling_directions():
    # second fundamental form of a 3-dim cylinder against its whole normal
    # line: the nullity is the plane of straight rulings
    from confpair import jet3 as j3
    from confpair.jets import ChartGrid, ImmersionJet, fundamental_data

    grid = ChartGrid((5, 5, 5), (0.05, 0.05, 0.05), (0.1, -0.1, -0.1))

    def cyl(xs):
        x1, x2, x3 = xs
        return [j3.cos(x1), j3.sin(x1), x2, x3]

    fund = fundamental_data(ImmersionJet.from_function(cyl, grid, ScalarProduct.euclidean(4)))
    q = grid.center_index()
    target = ScalarProduct.euclidean(1)
    beta = BilinearSample(target, fund.alpha[q], symmetric=True)
    null = nullity_space(beta, Subspace.full(target))
    assert null.rank == 2
    # the curled direction is not in the nullity
    assert not null.contains(np.array([1.0, 0.0, 0.0]))
