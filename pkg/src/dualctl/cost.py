"""Optimal budget in closed form, discounted costs and the Green's-curl test.

The explicit cost follows the three regions of the kernel geometry:
nothing is spent inside the invariance kernel; from ``B \\ Inv`` the
trajectory coasts to the arc ``i = istar`` and rides it down to the herd
threshold; from ``Viab \\ B`` it coasts to the barrier, rides it with
maximal confinement to the corner and then follows the arc.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._numerics import converged_quadrature
from .dynamics import EpidemicParams, PiecewiseControl, State, integrate, rk4_step
from .exceptions import DomainError, InfeasibleError
from .geometry import RegionTag, barrier_height, check_proviso, classify, s1_solve, s2_eval
from .greedy import GreedyConfig, simulate_greedy
from .weights import CostWeight


@dataclass(frozen=True)
class QuadratureConfig:
    order: int = 16
    panels: int = 64
    abs_tol: float = 1e-10

    def __post_init__(self):
        if self.order < 1 or self.panels < 1:
            raise ValueError("quadrature order and panel count must be positive")


DEFAULT_QUADRATURE = QuadratureConfig()


def _quad(f, a, b, q):
    return converged_quadrature(f, a, b, q.order, q.panels, q.abs_tol)


def arc_cost(s_entry, istar, p, lam, q=DEFAULT_QUADRATURE):
    """Budget spent on the singular arc from ``(s_entry, istar)`` down to the herd threshold."""
    k = p.s_herd

    def integrand(l):
        return lam(l, istar) * (1 - k / l)

    return _quad(integrand, k, s_entry, q) / (p.gamma * istar)


def barrier_cost(s_entry, istar, p, lam, q=DEFAULT_QUADRATURE):
    """Budget spent riding the barrier from abscissa ``s_entry`` to the corner."""
    ub = p.ubar

    def integrand(s):
        w = barrier_height(s, istar, p)
        return lam(s, w) * ub / (s * w)

    return _quad(integrand, p.s_herd_bar, s_entry, q) / (p.beta * (1 - ub))


def explicit_cost(
    x0: State, istar, p: EpidemicParams, lam: CostWeight, q: QuadratureConfig = DEFAULT_QUADRATURE
) -> float:
    """Minimal budget keeping ``i <= istar`` from ``x0``."""
    x0.check()
    check_proviso(istar, p)
    region = classify(x0, istar, p)
    if region is RegionTag.Outside:
        raise InfeasibleError(f"{x0} is outside the viability kernel for istar={istar}")
    if region is RegionTag.Invariant:
        return 0.0
    if region is RegionTag.BminusInv:
        return arc_cost(s1_solve(x0, istar, p), istar, p, lam, q)
    s2 = s2_eval(x0, istar, p)
    return barrier_cost(s2, istar, p, lam, q) + arc_cost(p.s_herd_bar, istar, p, lam, q)


def explicit_cost_unit_weight(x0: State, istar, p: EpidemicParams) -> float:
    """Closed-form antiderivative route for ``lambda = 1`` (no quadrature)."""
    k = p.s_herd
    region = classify(x0, istar, p)
    if region is RegionTag.Outside:
        raise InfeasibleError(f"{x0} is outside the viability kernel for istar={istar}")
    if region is RegionTag.Invariant:
        return 0.0

    def arc(s1):
        return (s1 - k - k * math.log(s1 / k)) / (p.gamma * istar)

    if region is RegionTag.BminusInv:
        return arc(s1_solve(x0, istar, p))
    raise NotImplementedError("the barrier integral has no elementary antiderivative for lambda = 1")


def right_continuity_probe(x0, istar, p, lam, deltas: Sequence[float], q=DEFAULT_QUADRATURE):
    """Explicit costs at ``istar + delta`` for each ``delta``."""
    return [explicit_cost(x0, istar + d, p, lam, q) for d in deltas]


def discounted_cost(
    x0: State,
    controller,
    q_factor: float,
    p: EpidemicParams,
    lam: CostWeight,
    horizon: float = 5000.0,
    step: float = 0.01,
) -> float:
    """``int exp(-q t) lambda u dt`` along the trajectory driven by ``controller``.

    ``controller`` may be a :class:`GreedyConfig` (exact greedy simulation),
    a :class:`PiecewiseControl` or a feedback map.
    """
    if not q_factor > 0:
        raise DomainError("discount rate must be positive")
    if isinstance(controller, GreedyConfig):
        cfg = GreedyConfig(controller.istar, controller.boundary_band, step, horizon, controller.i_tol)
        traj = simulate_greedy(x0, cfg, p, lam, discount=q_factor, stop_when_invariant=True)
    else:
        traj = integrate(x0, controller, horizon, step, p, lam, discount=q_factor)
    return float(traj.z[-1])


# Green's-curl optimality test -------------------------------------------------

_PHI_RTOL = 1e-12


def green_curl(s, i, lam: CostWeight, p: EpidemicParams):
    """``dQ/ds - dP/di`` for ``lambda u dt = P ds + Q di``.

    With ``P = lambda (gamma/(beta s) - 1)/(gamma i)`` and
    ``Q = -lambda/(gamma i)`` this is
    ``-d_s lambda/(gamma i) - (gamma/(beta s) - 1)(d_i lambda - lambda/i)/(gamma i)``.
    """
    if np.any(np.asarray(i) < 1e-12):
        raise DomainError("green_curl needs i above the positivity floor")
    g = p.gamma
    lv = lam(s, i)
    ds, di = lam.grad(s, i)
    return -ds / (g * i) - (p.s_herd / s - 1) * (di - lv / i) / (g * i)


def phi_along_flow(s, i, lam, p):
    """``lambda/(gamma i)``, the quantity whose monotonicity along ``u = 0`` flows is tested."""
    return lam(s, i) / (p.gamma * i)


@dataclass(frozen=True)
class GreenReport:
    max_value: float
    argmax: tuple
    holds: bool
    tolerance: float
    phi_monotone: bool
    phi_max_increase: float
    trajectories: int

    def to_dict(self):
        return {
            "max_value": self.max_value,
            "argmax": list(self.argmax),
            "holds": self.holds,
            "tolerance": self.tolerance,
            "phi_monotone": self.phi_monotone,
            "phi_max_increase": self.phi_max_increase,
            "trajectories": self.trajectories,
        }


def green_condition_check(
    lam: CostWeight,
    p: EpidemicParams,
    s_range: Optional[tuple] = None,
    i_range: tuple = (1e-3, 0.2),
    resolution: int = 200,
    tol: float = 1e-12,
    n_trajectories: int = 10,
    seed: int = 0,
) -> GreenReport:
    """Maximum of the curl over a grid of ``{s >= gamma/beta}`` and a monotonicity probe.

    The probe integrates ``n_trajectories`` uncontrolled trajectories from
    seeded random starts in the grid box and records the largest increase of
    ``lambda/(gamma i)`` while ``s >= gamma/beta``.
    """
    if resolution < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    s_lo, s_hi = s_range if s_range is not None else (p.s_herd, 1.0)
    S, I = np.meshgrid(np.linspace(s_lo, s_hi, resolution), np.linspace(*i_range, resolution), indexing="ij")
    mask = S + I <= 1.0
    curl = np.where(mask, green_curl(S, I, lam, p), -np.inf)
    k = np.unravel_index(np.argmax(curl), curl.shape)
    max_value = float(curl[k])

    rng = np.random.default_rng(seed)
    worst = -np.inf
    monotone = True
    for _ in range(n_trajectories):
        s0 = rng.uniform(max(s_lo, p.s_herd), s_hi)
        i0 = rng.uniform(i_range[0], min(i_range[1], 1 - s0))
        s, i, t, dt = s0, i0, 0.0, 0.05
        prev = phi_along_flow(s, i, lam, p)
        while s >= p.s_herd and t < 2000:
            s, i, _ = rk4_step(s, i, 0.0, t, 0.0, dt, p, lam)
            t += dt
            if s < p.s_herd:
                break
            cur = phi_along_flow(s, i, lam, p)
            worst = max(worst, float(cur - prev))
            # allow round-off relative to |phi| (constant phi for lambda proportional to i)
            monotone &= cur - prev <= tol + _PHI_RTOL * abs(prev)
            prev = cur
    if not np.isfinite(worst):
        worst = 0.0
    return GreenReport(
        max_value=max_value,
        argmax=(float(S[k]), float(I[k])),
        holds=max_value <= tol,
        tolerance=tol,
        phi_monotone=bool(monotone),
        phi_max_increase=worst,
        trajectories=n_trajectories,
    )


def phi_derivative_residuals(x0: State, lam: CostWeight, p: EpidemicParams, duration=40.0, dt=0.5, fd_step=1e-3):
    """Compare a finite-difference derivative of ``lambda/(gamma i)`` with ``beta s i * curl``.

    Samples the uncontrolled flow from ``x0`` every ``dt``; at each sample
    the derivative is a five-point stencil built from short RK4 flows.
    Returns the array of absolute residuals.
    """

    def flow(s, i, tau):
        if tau == 0:
            return s, i
        n = max(1, int(math.ceil(abs(tau) / 1e-3)))
        h = tau / n
        for _ in range(n):
            s, i, _ = rk4_step(s, i, 0.0, 0.0, 0.0, h, p, lam)
        return s, i

    s, i = x0.s, x0.i
    out = []
    t = 0.0
    while t <= duration:
        vals = [phi_along_flow(*flow(s, i, m * fd_step), lam, p) for m in (-2, -1, 1, 2)]
        fd = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * fd_step)
        exact = p.beta * s * i * green_curl(s, i, lam, p)
        out.append(abs(fd - exact))
        s, i = flow(s, i, dt)
        t += dt
    return np.array(out)
