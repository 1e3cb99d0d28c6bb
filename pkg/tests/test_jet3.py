import numpy as np

from confpair import jet3


def manual_jets(fn, point, h=1e-3):
    """Finite-difference reference for value/grad/hess of a scalar callable."""
    n = len(point)
    val = fn(point)
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        grad[i] = (fn(point + e) - fn(point - e)) / (2 * h)
        hess[i, i] = (fn(point + e) - 2 * val + fn(point - e)) / h**2
    for i in range(n):
        for j in range(i + 1, n):
            ei, ej = np.zeros(n), np.zeros(n)
            ei[i] = h
            ej[j] = h
            hess[i, j] = hess[j, i] = (
                fn(point + ei + ej) - fn(point + ei - ej) - fn(point - ei + ej) + fn(point - ei - ej)
            ) / (4 * h**2)
    return val, grad, hess


def test_polynomial_jets_are_exact():
    pts = np.array([[0.3, -1.2], [1.5, 0.4]])
    x, y = jet3.variables(pts)
    f = x * x * y + 2.0 * y - x
    # f = x^2 y + 2y - x
    assert np.allclose(f.v, pts[:, 0] ** 2 * pts[:, 1] + 2 * pts[:, 1] - pts[:, 0])
    assert np.allclose(f.g[:, 0], 2 * pts[:, 0] * pts[:, 1] - 1)
    assert np.allclose(f.g[:, 1], pts[:, 0] ** 2 + 2)
    assert np.allclose(f.h[:, 0, 0], 2 * pts[:, 1])
    assert np.allclose(f.h[:, 0, 1], 2 * pts[:, 0])
    assert np.allclose(f.t[:, 0, 0, 1], 2.0)
    assert np.allclose(f.t[:, 0, 0, 0], 0.0)


def test_division_and_sqrt_against_fd():
    pts = np.array([[0.7, 0.9]])
    x, y = jet3.variables(pts)
    g = (jet3.sin(x) + 2.0) / jet3.sqrt(x * x + y * y)

    def ref(p):
        return (np.sin(p[0]) + 2.0) / np.hypot(p[0], p[1])

    val, grad, hess = manual_jets(ref, pts[0])
    assert np.allclose(g.v[0], val)
    assert np.allclose(g.g[0], grad, atol=1e-8)
    assert np.allclose(g.h[0], hess, atol=1e-5)


def test_third_order_of_exp_product():
    pts = np.array([[0.2, -0.1]])
    x, y = jet3.variables(pts)
    f = jet3.exp(x * y)
    # d^3/dx^2 dy of exp(xy) = d/dy (y^2 exp) ... check one mixed entry analytically
    x0, y0 = pts[0]
    e = np.exp(x0 * y0)
    # exact: f_x = y e, f_xx = y^2 e, f_xxy = 2y e + y^2 x e
    expect = (2 * y0 + y0**2 * x0) * e
    assert np.allclose(f.t[0, 0, 0, 1], expect)
    assert np.allclose(f.t[0, 0, 1, 0], expect)
    assert np.allclose(f.t[0, 1, 0, 0], expect)


def test_reduced_order_skips_tensors():
    pts = np.random.default_rng(0).normal(size=(5, 3))
    xs = jet3.variables(pts, order=1)
    f = xs[0] * xs[1] + xs[2]
    assert f.h is None and f.t is None
    assert np.allclose(f.g[:, 0], pts[:, 1])


def test_norm_helpers():
    pts = np.array([[3.0, 4.0]])
    x, y = jet3.variables(pts)
    r = jet3.norm(x, y)
    assert np.allclose(r.v, 5.0)
    assert np.allclose(r.g[0], [0.6, 0.8])
