"""Forward-mode Taylor arithmetic up to third order, vectorized over a batch.

A `Jet3` carries value, gradient, Hessian and (optionally) the symmetric
third-derivative tensor of a scalar function of ``nvars`` chart variables,
evaluated at a batch of points.  Arithmetic propagates derivatives by the
Leibniz rule; univariate functions compose through `apply_univariate`.
Requesting ``order < 3`` drops the higher tensors, which keeps level-set
scans over large meshes cheap.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet3", "variables", "constant", "sin", "cos", "exp", "sqrt", "norm2", "norm"]


class Jet3:
    __slots__ = ("v", "g", "h", "t", "nvars")

    def __init__(self, v, g=None, h=None, t=None, nvars=None):
        self.v = np.asarray(v, dtype=float)
        self.g = g
        self.h = h
        self.t = t
        if nvars is None:
            if g is None:
                raise ValueError("nvars required when no gradient is stored")
            nvars = g.shape[-1]
        self.nvars = nvars

    @property
    def order(self) -> int:
        if self.g is None:
            return 0
        if self.h is None:
            return 1
        if self.t is None:
            return 2
        return 3

    # -- construction -------------------------------------------------

    def _zero_like(self, value):
        value = np.broadcast_to(np.asarray(value, dtype=float), self.v.shape).copy()
        n = self.nvars
        g = np.zeros(self.v.shape + (n,)) if self.g is not None else None
        h = np.zeros(self.v.shape + (n, n)) if self.h is not None else None
        t = np.zeros(self.v.shape + (n, n, n)) if self.t is not None else None
        return Jet3(value, g, h, t, nvars=n)

    def _coerce(self, other):
        if isinstance(other, Jet3):
            return other
        return self._zero_like(other)

    # -- ring operations ----------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        return Jet3(
            self.v + o.v,
            None if self.g is None else self.g + o.g,
            None if self.h is None else self.h + o.h,
            None if self.t is None else self.t + o.t,
            nvars=self.nvars,
        )

    __radd__ = __add__

    def __neg__(self):
        return Jet3(
            -self.v,
            None if self.g is None else -self.g,
            None if self.h is None else -self.h,
            None if self.t is None else -self.t,
            nvars=self.nvars,
        )

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        a, b = self, o
        v = a.v * b.v
        g = h = t = None
        if a.g is not None:
            g = a.g * b.v[..., None] + b.g * a.v[..., None]
        if a.h is not None:
            cross = a.g[..., :, None] * b.g[..., None, :]
            h = (
                a.h * b.v[..., None, None]
                + b.h * a.v[..., None, None]
                + cross
                + np.swapaxes(cross, -1, -2)
            )
        if a.t is not None:
            t = a.t * b.v[..., None, None, None] + b.t * a.v[..., None, None, None]
            t = t + _sym_hg(a.h, b.g) + _sym_hg(b.h, a.g)
        return Jet3(v, g, h, t, nvars=self.nvars)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        u = self.v
        if isinstance(k, int) and k >= 0:
            f0 = u**k
            f1 = k * u ** (k - 1) if k >= 1 else np.zeros_like(u)
            f2 = k * (k - 1) * u ** (k - 2) if k >= 2 else np.zeros_like(u)
            f3 = k * (k - 1) * (k - 2) * u ** (k - 3) if k >= 3 else np.zeros_like(u)
        else:
            f0 = u**k
            f1 = k * u ** (k - 1)
            f2 = k * (k - 1) * u ** (k - 2)
            f3 = k * (k - 1) * (k - 2) * u ** (k - 3)
        return self.apply_univariate(f0, f1, f2, f3)

    def reciprocal(self):
        u = self.v
        inv = 1.0 / u
        return self.apply_univariate(inv, -(inv**2), 2 * inv**3, -6 * inv**4)

    # -- composition with a univariate map -----------------------------

    def apply_univariate(self, f0, f1, f2=None, f3=None):
        """Chain rule for h = f(u) given derivative values of f at u."""
        v = np.asarray(f0, dtype=float)
        g = h = t = None
        if self.g is not None:
            f1 = np.asarray(f1, dtype=float)
            g = f1[..., None] * self.g
        if self.h is not None:
            f2 = np.asarray(f2, dtype=float)
            gg = self.g[..., :, None] * self.g[..., None, :]
            h = f2[..., None, None] * gg + f1[..., None, None] * self.h
        if self.t is not None:
            f3 = np.asarray(f3, dtype=float)
            ggg = (
                self.g[..., :, None, None]
                * self.g[..., None, :, None]
                * self.g[..., None, None, :]
            )
            t = (
                f3[..., None, None, None] * ggg
                + f2[..., None, None, None] * _sym_hg(self.h, self.g)
                + f1[..., None, None, None] * self.t
            )
        return Jet3(v, g, h, t, nvars=self.nvars)


def _sym_hg(h, g):
    """Symmetrized product h_{ij} g_k + h_{ik} g_j + h_{jk} g_i."""
    return (
        h[..., :, :, None] * g[..., None, None, :]
        + h[..., :, None, :] * g[..., None, :, None]
        + h[..., None, :, :] * g[..., :, None, None]
    )


def variables(points: np.ndarray, order: int = 3) -> list[Jet3]:
    """Seed jets for the chart coordinates at a batch of points (P, n)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    p, n = points.shape
    out = []
    for i in range(n):
        g = None
        h = None
        t = None
        if order >= 1:
            g = np.zeros((p, n))
            g[:, i] = 1.0
        if order >= 2:
            h = np.zeros((p, n, n))
        if order >= 3:
            t = np.zeros((p, n, n, n))
        out.append(Jet3(points[:, i].copy(), g, h, t, nvars=n))
    return out


def constant(value, template: Jet3) -> Jet3:
    """A constant jet shaped like `template`."""
    return template._zero_like(value)


def sin(x: Jet3) -> Jet3:
    s, c = np.sin(x.v), np.cos(x.v)
    return x.apply_univariate(s, c, -s, -c)


def cos(x: Jet3) -> Jet3:
    s, c = np.sin(x.v), np.cos(x.v)
    return x.apply_univariate(c, -s, -c, s)


def exp(x: Jet3) -> Jet3:
    e = np.exp(x.v)
    return x.apply_univariate(e, e, e, e)


def sqrt(x: Jet3) -> Jet3:
    r = np.sqrt(x.v)
    return x.apply_univariate(r, 0.5 / r, -0.25 / r**3, 0.375 / r**5)


def norm2(*xs: Jet3) -> Jet3:
    """Sum of squares of the arguments."""
    acc = xs[0] * xs[0]
    for x in xs[1:]:
        acc = acc + x * x
    return acc


def norm(*xs: Jet3) -> Jet3:
    return sqrt(norm2(*xs))
