"""Greedy (null-singular-null) feedback and its closed-loop simulation.

The policy does nothing in the interior of the viability kernel, applies
maximal confinement on the barrier ``i = psi(s)`` for ``s > s_herd_bar`` and
the singular control ``1 - gamma/(beta s)`` on the arc ``i = istar``.  The
simulator follows the three phases explicitly: free flight with event
location, barrier riding with projection, and an analytic arc on which
``s`` decreases at rate ``gamma * istar``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DEFAULT_I_TOL,
    EpidemicParams,
    State,
    Trajectory,
    is_settled,
    rk4_step,
    trajectory_metrics,
)
from .exceptions import InfeasibleError, IntegrationError
from .geometry import RegionTag, classify, phi_inv_boundary, psi_viab_boundary
from .weights import CostWeight

_EVENT_TIME_TOL = 1e-10
_PROJECTION_TOL = 1e-9


@dataclass(frozen=True)
class GreedyConfig:
    istar: float
    boundary_band: float = 1e-9
    step: float = 0.01
    horizon: float = 5000.0
    i_tol: float = DEFAULT_I_TOL

    def __post_init__(self):
        if not 0 < self.istar < 1:
            raise ValueError(f"istar must lie in (0, 1), got {self.istar}")
        if not (self.boundary_band > 0 and self.step > 0 and self.horizon > 0):
            raise ValueError("boundary_band, step and horizon must be positive")

    @property
    def band(self):
        return self.boundary_band * self.istar


def greedy_u(x: State, cfg: GreedyConfig, p: EpidemicParams) -> float:
    s, i = x.s, x.i
    psi = psi_viab_boundary(s, cfg.istar, p)
    if i > psi + cfg.band:
        raise InfeasibleError(f"{x} is outside the viability kernel for istar={cfg.istar}")
    if abs(i - psi) > cfg.band:
        return 0.0
    if s > p.s_herd_bar:
        return p.ubar
    if s > p.s_herd:
        return 1 - p.s_herd / s
    return 0.0


def _project_on_barrier(s, i, istar, p):
    """Orthogonal projection of ``(s, i)`` onto the graph of ``psi`` (``s > s_herd_bar`` branch)."""
    c = p.s_herd_bar
    x = s
    for _ in range(50):
        psi = istar + c * (1 + math.log(x / c)) - x
        d1 = c / x - 1
        d2 = -c / (x * x)
        f = (x - s) + (psi - i) * d1
        df = 1 + d1 * d1 + (psi - i) * d2
        dx = f / df
        x -= dx
        if abs(dx) < 1e-15:
            break
    psi = istar + c * (1 + math.log(x / c)) - x
    if abs(x - s) > 1e-3 or not math.isfinite(psi):
        raise IntegrationError(f"barrier projection failed near ({s}, {i})")
    return x, psi


class _Recorder:
    def __init__(self, s, i):
        self.t, self.s, self.i, self.z, self.u = [0.0], [s], [i], [0.0], []

    def push(self, t, s, i, z, u):
        self.t.append(t)
        self.s.append(s)
        self.i.append(i)
        self.z.append(z)
        self.u.append(u)

    def build(self, **meta):
        return Trajectory(
            np.array(self.t), np.array(self.s), np.array(self.i), np.array(self.z), np.array(self.u), meta
        )


def _bisect_fraction(g, h):
    """Smallest step fraction where ``g`` changes sign, given ``g(0) <= 0 < g(h)``."""
    lo, hi = 0.0, h
    while hi - lo > _EVENT_TIME_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


def _arc_integrand(t, t0, s0, istar, p, lam, discount):
    s = s0 - p.gamma * istar * (t - t0)
    w = lam(s, istar) * (1 - p.s_herd / s)
    return w * math.exp(-discount * t) if discount else w


def simulate_greedy(
    x0: State,
    cfg: GreedyConfig,
    p: EpidemicParams,
    lam: CostWeight,
    *,
    discount: float = 0.0,
    stop_when_invariant: bool = False,
) -> Trajectory:
    """Closed-loop trajectory under the greedy feedback.

    With ``stop_when_invariant`` the run ends as soon as the state enters the
    invariance kernel, after which the control and the running cost vanish.
    ``meta["phases"]`` lists ``(phase, t_start)`` in order of occurrence.
    """
    x0.check()
    istar, band = cfg.istar, cfg.band
    c_bar, c_herd = p.s_herd_bar, p.s_herd
    if x0.i > psi_viab_boundary(x0.s, istar, p) + band:
        raise InfeasibleError(f"{x0} is outside the viability kernel for istar={istar}")

    s, i, z, t = x0.s, x0.i, 0.0, 0.0
    rec = _Recorder(s, i)
    h_max = cfg.step

    def mode_at(s, i):
        if abs(i - psi_viab_boundary(s, istar, p)) <= band:
            if s > c_bar:
                return "barrier"
            if s > c_herd:
                return "arc"
        return "free"

    mode = mode_at(s, i)
    if mode == "barrier":
        s, i = _project_on_barrier(s, i, istar, p)
    elif mode == "arc":
        i = istar
    phases = [(mode, 0.0)]

    while t < cfg.horizon:
        h = min(h_max, cfg.horizon - t)
        if mode == "free":
            if stop_when_invariant and i <= phi_inv_boundary(s, istar, p) + 1e-12:
                break
            if is_settled(s, i, p, cfg.i_tol):
                break
            s_n, i_n, _ = rk4_step(s, i, z, t, 0.0, h, p, lam)
            if i_n - psi_viab_boundary(s_n, istar, p) > 0 and s_n > c_herd:
                s0_, i0_, t0_ = s, i, t

                def gap(tau):
                    ss, ii, _ = rk4_step(s0_, i0_, 0.0, t0_, 0.0, tau, p, lam)
                    return ii - psi_viab_boundary(ss, istar, p)

                tau = _bisect_fraction(gap, h)
                s_n, i_n, _ = rk4_step(s, i, z, t, 0.0, tau, p, lam)
                t += tau
                if s_n > c_bar:
                    s_n, i_n = _project_on_barrier(s_n, i_n, istar, p)
                    mode = "barrier"
                else:
                    i_n = istar
                    mode = "arc"
                phases.append((mode, t))
            else:
                t += h
            s, i = s_n, i_n
            rec.push(t, s, i, z, 0.0)
        elif mode == "barrier":
            u = p.ubar
            s_n, i_n, z_n = rk4_step(s, i, z, t, u, h, p, lam, discount)
            if s_n <= c_bar:
                s0_, i0_, z0_, t0_ = s, i, z, t

                def past_corner(tau):
                    return c_bar - rk4_step(s0_, i0_, z0_, t0_, u, tau, p, lam, discount)[0]

                tau = _bisect_fraction(past_corner, h)
                _, _, z_n = rk4_step(s, i, z, t, u, tau, p, lam, discount)
                s_n, i_n = c_bar, istar
                t += tau
                mode = "arc"
                phases.append((mode, t))
            else:
                s_n, i_n = _project_on_barrier(s_n, i_n, istar, p)
                if abs(i_n - psi_viab_boundary(s_n, istar, p)) > _PROJECTION_TOL:
                    raise IntegrationError("barrier projection error exceeds tolerance")
                t += h
            s, i, z = s_n, i_n, z_n
            rec.push(t, s, i, z, u)
        else:  # singular arc: i held at istar, ds/dt = -gamma * istar
            rate = p.gamma * istar
            remaining = (s - c_herd) / rate
            u = 1 - c_herd / s
            tau = min(h, remaining)
            f0 = _arc_integrand(t, t, s, istar, p, lam, discount)
            f1 = _arc_integrand(t + tau / 2, t, s, istar, p, lam, discount)
            f2 = _arc_integrand(t + tau, t, s, istar, p, lam, discount)
            z += tau / 6 * (f0 + 4 * f1 + f2)
            if tau >= remaining:
                s = c_herd
                mode = "free"
                t += tau
                phases.append((mode, t))
            else:
                s -= rate * tau
                t += tau
            i = istar
            rec.push(t, s, i, z, u)

    return rec.build(phases=phases, istar=istar)


def greedy_budget(x0: State, cfg: GreedyConfig, p: EpidemicParams, lam: CostWeight) -> float:
    """Budget consumed by the greedy feedback from ``x0``."""
    if classify(x0, cfg.istar, p) is RegionTag.Invariant:
        return 0.0
    traj = simulate_greedy(x0, cfg, p, lam, stop_when_invariant=True)
    return trajectory_metrics(traj).total_cost


def greedy_controller(cfg: GreedyConfig, p: EpidemicParams):
    """The greedy law as a plain feedback map for :func:`dualctl.dynamics.integrate`."""

    def controller(x):
        return greedy_u(x, cfg, p)

    return controller
