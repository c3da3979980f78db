"""Small numerical helpers: bracketed root finding and composite Gauss-Legendre."""

from functools import lru_cache

import numpy as np
from scipy import optimize

from .exceptions import DomainError, QuadratureError


def bisect_root(f, lo, hi, xtol=1e-12):
    """Root of ``f`` on ``[lo, hi]`` by bisection; requires a sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise DomainError(f"no sign change on [{lo!r}, {hi!r}]: f={flo!r}, {fhi!r}")
    return optimize.bisect(f, lo, hi, xtol=xtol, maxiter=200)


@lru_cache(maxsize=16)
def _leggauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(f, a, b, order=16, panels=64):
    """Composite Gauss-Legendre rule; ``f`` must accept numpy arrays."""
    if b == a:
        return 0.0
    x, w = _leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return float(np.sum(half[:, None] * w[None, :] * vals))


def converged_quadrature(f, a, b, order=16, panels=64, abs_tol=1e-10, max_panels=8192):
    """Double the panel count until two successive estimates agree to ``abs_tol``."""
    coarse = gauss_legendre(f, a, b, order, panels)
    while panels <= max_panels:
        panels *= 2
        fine = gauss_legendre(f, a, b, order, panels)
        if abs(fine - coarse) <= abs_tol * max(1.0, abs(fine)):
            return fine
        coarse = fine
    raise QuadratureError(f"quadrature on [{a}, {b}] did not converge to {abs_tol}")
