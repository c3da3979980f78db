"""Closed-form viability/invariance kernels of the controlled SIR model.

For a peak level ``istar`` the viability kernel is bounded by the maximally
confined trajectory through the corner ``(s_herd_bar, istar)``; the
invariance kernel is the same construction with no confinement.  Both
boundaries are level sets of the first integral ``s + i - k ln s`` of the
constant-control flow, with ``k = gamma / (beta (1 - u))``.
"""

import enum
import math
import warnings

import numpy as np

from ._numerics import bisect_root
from .dynamics import EpidemicParams, State
from .exceptions import DomainError

CLASSIFY_TOL = 1e-12
S2_TOL = 1e-6


class ProvisoWarning(UserWarning):
    """The peak level is outside the range where the kernel formulas are established."""


class RegionTag(enum.Enum):
    Invariant = "Invariant"
    BminusInv = "BminusInv"
    ViabMinusB = "ViabMinusB"
    Outside = "Outside"


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _log_ratio(s, k):
    return np.log(np.maximum(s, 1e-300) / k)


def check_proviso(istar, p):
    """Warn when ``istar + s_herd_bar > 1``; returns whether the proviso holds."""
    ok = istar + p.s_herd_bar <= 1
    if not ok:
        warnings.warn(
            f"istar={istar} with s_herd_bar={p.s_herd_bar:.6g} exceeds the supported range "
            "istar + s_herd_bar <= 1; kernel formulas are evaluated anyway",
            ProvisoWarning,
            stacklevel=2,
        )
    return ok


def psi_viab_boundary(s, istar, p: EpidemicParams):
    """Upper boundary of the viability kernel; may be negative for large ``s``."""
    c = p.s_herd_bar
    s = np.asarray(s, dtype=float)
    curve = istar + c * (1 + _log_ratio(s, c)) - s
    return _scalar(np.where(s <= c, istar, curve))


def phi_inv_boundary(s, istar, p: EpidemicParams):
    """Upper boundary of the invariance kernel."""
    c = p.s_herd
    s = np.asarray(s, dtype=float)
    curve = c * (1 + _log_ratio(s, c)) - s + istar
    return _scalar(np.where(s <= c, istar, curve))


def b_bound(s, istar, p: EpidemicParams):
    """Largest ``i`` at abscissa ``s`` whose free trajectory passes under the corner.

    This is the uncontrolled trajectory through ``(s_herd_bar, istar)``,
    written as ``i = istar + s_herd_bar + (gamma/beta) ln(s/s_herd_bar) - s``.
    """
    s = np.asarray(s, dtype=float)
    return _scalar(istar + p.s_herd_bar + p.s_herd * _log_ratio(s, p.s_herd_bar) - s)


def classify(x: State, istar, p: EpidemicParams, tol=CLASSIFY_TOL) -> RegionTag:
    """Region of ``x`` relative to the kernels at peak level ``istar``.

    Points on a boundary go to the more favourable region.
    """
    s, i = x.s, x.i
    if i > psi_viab_boundary(s, istar, p) + tol:
        return RegionTag.Outside
    if i <= phi_inv_boundary(s, istar, p) + tol:
        return RegionTag.Invariant
    if i <= b_bound(s, istar, p) + tol:
        return RegionTag.BminusInv
    return RegionTag.ViabMinusB


def is_viable(x: State, istar, p: EpidemicParams, tol=CLASSIFY_TOL):
    return x.i <= psi_viab_boundary(x.s, istar, p) + tol


def dom_min_peak(x0: State, p: EpidemicParams):
    """Smallest peak level for which ``x0`` is viable (left end of the lower value domain)."""
    c = p.s_herd_bar
    if x0.s <= c:
        return x0.i
    return x0.i + x0.s - c * (1 + math.log(x0.s / c))


def theta(i, p: EpidemicParams):
    """Level of the maximally confined first integral on the barrier at peak ``i``."""
    c = p.s_herd_bar
    return i + c * (1 - math.log(c))


def s1_solve(x0: State, istar, p: EpidemicParams):
    """Abscissa at which the free trajectory from ``x0`` first reaches ``i = istar``.

    Solves ``s1 - s0 - i0 + istar - (gamma/beta) ln(s1/s0) = 0`` on
    ``[gamma/beta, s0]``, where the residual is increasing.
    """
    k = p.s_herd
    s0, i0 = x0.s, x0.i
    if s0 <= k:
        if abs(s0 - k) <= 1e-15 and abs(i0 - istar) <= 1e-15:
            return k
        raise DomainError(f"{x0} is past the herd threshold; no arc entry for istar={istar}")

    def residual(s1):
        return s1 - s0 - i0 + istar - k * math.log(s1 / s0)

    return bisect_root(residual, k, s0, xtol=1e-15)


def s2_eval(x0: State, istar, p: EpidemicParams):
    """Abscissa at which the free trajectory from ``x0`` meets the viability barrier."""
    c = p.s_herd_bar
    exponent = (p.beta * (1 - p.ubar) / (p.gamma * p.ubar)) * (
        x0.s + x0.i - p.s_herd * math.log(x0.s) - theta(istar, p)
    )
    s2 = math.exp(exponent)
    if not (c - S2_TOL <= s2 <= x0.s + S2_TOL):
        raise DomainError(f"s2={s2} outside [{c}, {x0.s}]; {x0} is not in Viab minus B for istar={istar}")
    return s2


def barrier_height(s, istar, p: EpidemicParams):
    """``w(s) = theta(istar) - s + s_herd_bar ln s``, the barrier written through ``theta``."""
    return theta(istar, p) - s + p.s_herd_bar * np.log(s)
