"""Gauss-Legendre quadrature backbone.

Three entry points:

* :func:`adaptive_quad` -- scalar adaptive composite quadrature with a global
  relative tolerance (measured against the L1 norm of the integrand).
* :func:`integrate_batch` -- many intervals at once, refined uniformly until
  every interval has converged. Deterministic in its inputs, which matters
  when it sits inside another quadrature.
* :class:`Primitive` -- cumulative integral of a fixed function on a grid,
  used for the per-customer hazard integrals in the simulator.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "QuadratureError",
    "adaptive_quad",
    "integrate_batch",
    "Primitive",
    "gauss_legendre",
]

_ADAPT_ORDER = 15
_BATCH_ORDER = 16
_PRIM_ORDER = 20
_PARTIAL_ORDER = 12


class QuadratureError(ArithmeticError):
    """Raised when a quadrature fails to reach its tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1], cached."""
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _panels(f, a, b, order):
    x, w = gauss_legendre(order)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts), dtype=float)
    vals = np.broadcast_to(vals, pts.shape)
    return half * (vals @ w), half * (np.abs(vals) @ w)


def adaptive_quad(
    f,
    a: float,
    b: float,
    rtol: float = 1e-10,
    atol: float = 1e-15,
    breakpoints=None,
    initial: int = 8,
    max_rounds: int = 50,
    max_panels: int = 20000,
) -> float:
    """Integrate a vectorised ``f`` over ``[a, b]``.

    Panels are bisected until ``|fine - coarse|`` summed over panels is below
    ``max(atol, rtol * int |f|)``. ``breakpoints`` are added to the initial
    partition (useful for kinks). Gives up once ``max_panels`` panels are
    active at the same time.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_quad(f, b, a, rtol, atol, breakpoints, initial, max_rounds, max_panels)
    edges = np.linspace(a, b, initial + 1)
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        edges = np.unique(np.concatenate([edges, bp[(bp > a) & (bp < b)]]))
    lo, hi = edges[:-1], edges[1:]
    coarse, coarse_abs = _panels(f, lo, hi, _ADAPT_ORDER)

    done = 0.0
    done_abs = 0.0
    done_err = 0.0
    length = b - a
    for _ in range(max_rounds):
        mid = 0.5 * (lo + hi)
        left, left_abs = _panels(f, lo, mid, _ADAPT_ORDER)
        right, right_abs = _panels(f, mid, hi, _ADAPT_ORDER)
        fine = left + right
        err = np.abs(fine - coarse)
        total_abs = done_abs + float(np.sum(left_abs + right_abs))
        tol = max(atol, rtol * total_abs)
        ok = err <= tol * (hi - lo) / length
        done += float(np.sum(fine[ok]))
        done_abs += float(np.sum((left_abs + right_abs)[ok]))
        done_err += float(np.sum(err[ok]))
        if ok.all():
            return done
        keep = ~ok
        if 2 * int(keep.sum()) > max_panels:
            break
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    raise QuadratureError(
        f"adaptive_quad did not converge on [{a}, {b}]", done_err + float(np.sum(err[keep]))
    )


def integrate_batch(
    f,
    a,
    b,
    rtol: float = 1e-12,
    atol: float = 1e-15,
    panels: int = 4,
    max_panels: int = 4096,
) -> np.ndarray:
    """Integrate ``f`` over each ``[a_k, b_k]`` with uniform panel refinement.

    ``f`` receives an array of shape ``(K, M)`` whose row ``k`` holds nodes in
    interval ``k`` and must return values of the same shape. Rows may differ
    in the function they evaluate (``f`` can close over per-row parameters).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    x, w = gauss_legendre(_BATCH_ORDER)

    def run(p):
        width = (b - a) / p
        starts = a[:, None] + width[:, None] * np.arange(p)[None, :]
        pts = (starts[:, :, None] + 0.5 * width[:, None, None] * (x + 1.0)).reshape(len(a), -1)
        vals = np.broadcast_to(np.asarray(f(pts), dtype=float), pts.shape)
        ww = np.tile(w, p)[None, :] * (0.5 * width)[:, None]
        return (vals * ww).sum(axis=1), (np.abs(vals) * ww).sum(axis=1)

    p = panels
    prev, _ = run(p)
    while True:
        p *= 2
        cur, cur_abs = run(p)
        err = np.abs(cur - prev)
        if np.all(err <= np.maximum(atol, rtol * cur_abs)):
            return cur
        if p >= max_panels:
            raise QuadratureError("integrate_batch did not converge", float(err.max()))
        prev = cur


class Primitive:
    """Running integral ``G(y) = int_lo^y g(x) dx`` of a vectorised ``g``.

    ``lo`` is the reference point fixed at construction; the table can later
    extend below it, in which case ``G`` is negative there.

    Cumulative values are stored on a grid of width ``cell``; evaluation adds
    a Gauss-Legendre integral over the partial cell, so accuracy is that of a
    12-point rule on a partial cell. The grid grows on demand.
    """

    def __init__(self, g, lo: float = 0.0, hi: float = 1.0, cell: float = 0.05):
        self.g = g
        self.cell = cell
        self.lo = lo
        self._cum = np.zeros(1)
        self._extend(hi)

    @property
    def hi(self) -> float:
        return self.lo + self.cell * (len(self._cum) - 1)

    def _cell_integrals(self, left_edges):
        x, w = gauss_legendre(_PRIM_ORDER)
        pts = left_edges[:, None] + 0.5 * self.cell * (x[None, :] + 1.0)
        return 0.5 * self.cell * (np.asarray(self.g(pts), dtype=float) @ w)

    def _extend(self, hi: float) -> None:
        need = int(math.ceil((hi - self.lo) / self.cell)) + 1
        have = len(self._cum) - 1
        if need <= have:
            return
        need = max(need, int(1.25 * have) + 1)
        edges = self.lo + self.cell * np.arange(have, need)
        inc = self._cell_integrals(edges)
        self._cum = np.concatenate([self._cum, self._cum[-1] + np.cumsum(inc)])

    def _extend_low(self, lo: float) -> None:
        k = int(math.ceil((self.lo - lo) / self.cell)) + 1
        edges = self.lo - self.cell * np.arange(k, 0, -1)
        inc = self._cell_integrals(edges)
        # prepend so that _cum[k] keeps the old reference value
        head = -np.cumsum(inc[::-1])[::-1]
        self._cum = np.concatenate([head, self._cum])
        self.lo = float(edges[0])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            return np.zeros_like(y)
        if y.min() < self.lo:
            self._extend_low(float(y.min()))
        if y.max() >= self.hi:
            self._extend(float(y.max()) + self.cell)
        k = np.floor((y - self.lo) / self.cell).astype(np.int64)
        k = np.clip(k, 0, len(self._cum) - 2)
        base = self.lo + self.cell * k
        x, w = gauss_legendre(_PARTIAL_ORDER)
        half = 0.5 * (y - base)
        pts = base[..., None] + half[..., None] * (x + 1.0)
        part = half * (np.asarray(self.g(pts), dtype=float) @ w)
        return self._cum[k] + part

    def between(self, a, b):
        """``int_a^b g``, elementwise."""
        return self(b) - self(a)
