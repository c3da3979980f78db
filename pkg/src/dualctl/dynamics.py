"""Controlled SIR dynamics, budget augmentation and fixed-step integration.

The state is ``(s, i)`` with the recovered density left implicit as
``1 - s - i``.  The augmented component ``z`` accumulates the running cost
``lambda(s, i) * u``, optionally discounted by ``exp(-q t)``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import DomainError, IntegrationError
from .weights import CostWeight

POSITIVITY_FLOOR = 1e-12
DEFAULT_I_TOL = 1e-9
_SIMPLEX_SLACK = 1e-9
_CONTROL_SLACK = 1e-12


@dataclass(frozen=True)
class EpidemicParams:
    """Transmission rate ``beta``, recovery rate ``gamma`` and maximal confinement ``ubar``."""

    beta: float
    gamma: float
    ubar: float

    def __post_init__(self):
        if not (self.beta > 0 and self.gamma > 0):
            raise DomainError(f"beta and gamma must be positive, got {self.beta}, {self.gamma}")
        if not 0 < self.ubar <= 1:
            raise DomainError(f"ubar must lie in (0, 1], got {self.ubar}")
        if not self.ubar < 1 - self.gamma / self.beta:
            raise DomainError(
                f"ubar={self.ubar} violates ubar < 1 - gamma/beta = {1 - self.gamma / self.beta}"
            )

    @property
    def s_herd(self):
        """Herd-immunity threshold gamma/beta without confinement."""
        return self.gamma / self.beta

    @property
    def s_herd_bar(self):
        """Herd-immunity threshold under maximal confinement."""
        return self.gamma / (self.beta * (1 - self.ubar))


@dataclass(frozen=True)
class State:
    s: float
    i: float

    def in_omega(self):
        return self.s > 0 and self.i > 0 and self.s + self.i <= 1 + _SIMPLEX_SLACK

    def check(self):
        if not (math.isfinite(self.s) and math.isfinite(self.i)) or not self.in_omega():
            raise DomainError(f"state {self} is outside Omega = {{s>0, i>0, s+i<=1}}")
        return self


@dataclass(frozen=True)
class AugmentedState:
    state: State
    z: float = 0.0


@dataclass(frozen=True)
class PiecewiseControl:
    """Open-loop control, constant on each cell of a uniform partition of ``[0, horizon]``.

    The control is zero after ``horizon``.
    """

    horizon: float
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if len(self.levels) < 1:
            raise DomainError("a piecewise control needs at least one piece")
        if not self.horizon > 0:
            raise DomainError("piecewise control horizon must be positive")

    @property
    def pieces(self):
        return len(self.levels)

    @property
    def piece_length(self):
        return self.horizon / self.pieces

    @property
    def breakpoints(self):
        return np.linspace(0.0, self.horizon, self.pieces + 1)

    def __call__(self, t):
        if t < 0 or t >= self.horizon:
            return 0.0
        k = min(int(t / self.piece_length), self.pieces - 1)
        return self.levels[k]

    def check(self, p):
        for v in self.levels:
            if v < -_CONTROL_SLACK or v > p.ubar + _CONTROL_SLACK:
                raise DomainError(f"control level {v} outside [0, {p.ubar}]")
        return self


@dataclass
class Trajectory:
    """Sampled trajectory; ``controls[k]`` is applied on ``[times[k], times[k+1]]``."""

    times: np.ndarray
    s: np.ndarray
    i: np.ndarray
    z: np.ndarray
    controls: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.s) == len(self.i) == len(self.z) == n):
            raise ValueError("times, s, i and z must have equal lengths")
        if len(self.controls) != max(n - 1, 0):
            raise ValueError("controls must have one entry per step")

    def __len__(self):
        return len(self.times)

    @property
    def points(self):
        return [AugmentedState(State(float(a), float(b)), float(c)) for a, b, c in zip(self.s, self.i, self.z)]

    @property
    def final_state(self):
        return State(float(self.s[-1]), float(self.i[-1]))

    def state_at(self, k):
        return State(float(self.s[k]), float(self.i[k]))


@dataclass(frozen=True)
class TrajectoryMetrics:
    peak_i: float
    total_cost: float
    final_state: State


def _check_control(u, p):
    if not (-_CONTROL_SLACK <= u <= p.ubar + _CONTROL_SLACK):
        raise DomainError(f"control {u} outside [0, {p.ubar}]")


def sir_rhs(x, u, p):
    """Vector field ``(ds/dt, di/dt)`` of the controlled SIR model."""
    x.check()
    _check_control(u, p)
    flux = p.beta * (1 - u) * x.s * x.i
    return -flux, flux - p.gamma * x.i


def augmented_rhs(a, u, p, lam):
    """``(ds/dt, di/dt, dz/dt)`` with ``dz/dt = lambda(s, i) * u``."""
    ds, di = sir_rhs(a.state, u, p)
    return ds, di, float(lam(a.state.s, a.state.i)) * u


def _field(s, i, u, beta, gamma):
    flux = beta * (1 - u) * s * i
    return -flux, flux - gamma * i


def rk4_step(s, i, z, t, u, h, p, lam, discount=0.0):
    """One classical RK4 step of the augmented system with ``u`` held fixed."""
    beta, gamma = p.beta, p.gamma

    def rate(ss, ii, tt):
        if u == 0.0:
            return 0.0
        w = lam(ss, ii) * u
        return w * math.exp(-discount * tt) if discount else w

    k1s, k1i = _field(s, i, u, beta, gamma)
    k1z = rate(s, i, t)
    s2, i2 = s + 0.5 * h * k1s, i + 0.5 * h * k1i
    k2s, k2i = _field(s2, i2, u, beta, gamma)
    k2z = rate(s2, i2, t + 0.5 * h)
    s3, i3 = s + 0.5 * h * k2s, i + 0.5 * h * k2i
    k3s, k3i = _field(s3, i3, u, beta, gamma)
    k3z = rate(s3, i3, t + 0.5 * h)
    s4, i4 = s + h * k3s, i + h * k3i
    k4s, k4i = _field(s4, i4, u, beta, gamma)
    k4z = rate(s4, i4, t + h)
    s_new = s + h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s)
    i_new = i + h / 6 * (k1i + 2 * k2i + 2 * k3i + k4i)
    z_new = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
    return max(s_new, POSITIVITY_FLOOR), max(i_new, POSITIVITY_FLOOR), z_new


def is_settled(s, i, p, i_tol=DEFAULT_I_TOL):
    """Past the herd threshold with a negligible infected density."""
    return i < i_tol and s < p.s_herd


Controller = Union[Callable[[State], float], PiecewiseControl]


def integrate(
    x0: State,
    controller: Controller,
    horizon: float,
    step: float,
    p: EpidemicParams,
    lam: CostWeight,
    *,
    discount: float = 0.0,
    i_tol: Optional[float] = DEFAULT_I_TOL,
) -> Trajectory:
    """Fixed-step RK4 integration of the augmented system.

    ``controller`` is either a feedback map ``State -> u`` (sampled at the
    start of each step) or a :class:`PiecewiseControl`, in which case steps
    are cut at the piece boundaries.  Integration stops at ``horizon`` or,
    unless ``i_tol`` is None, once the trajectory has settled.
    """
    x0.check()
    if not step > 0:
        raise DomainError("step must be positive")
    if not horizon >= step:
        raise DomainError("horizon must be at least one step")

    open_loop = isinstance(controller, PiecewiseControl)
    grid = _time_grid(horizon, step, controller.breakpoints if open_loop else ())
    if open_loop:
        controller.check(p)

    times, ss, ii, zz, us = [0.0], [x0.s], [x0.i], [0.0], []
    s, i, z = x0.s, x0.i, 0.0
    for t, t_next in zip(grid[:-1], grid[1:]):
        if i_tol is not None and is_settled(s, i, p, i_tol):
            break
        h = t_next - t
        if open_loop:
            u = controller(t + 0.5 * h)
        else:
            u = float(controller(State(s, i)))
            _check_control(u, p)
            u = min(max(u, 0.0), p.ubar)
        s, i, z = rk4_step(s, i, z, t, u, h, p, lam, discount)
        if not (math.isfinite(s) and math.isfinite(i) and math.isfinite(z)):
            raise IntegrationError(f"non-finite state at t={t_next}")
        times.append(t_next)
        ss.append(s)
        ii.append(i)
        zz.append(z)
        us.append(u)

    return Trajectory(np.array(times), np.array(ss), np.array(ii), np.array(zz), np.array(us))


def _time_grid(horizon, step, cuts):
    n = int(math.ceil(horizon / step - 1e-9))
    grid = np.minimum(np.arange(n + 1) * step, horizon)
    extra = [c for c in cuts if 0 < c < horizon]
    if extra:
        grid = np.union1d(grid, extra)
        # drop slivers created by cuts that nearly coincide with a step
        keep = np.concatenate([[True], np.diff(grid) > 1e-9 * step])
        grid = grid[keep]
        grid[-1] = horizon
    return grid


def trajectory_metrics(t: Trajectory) -> TrajectoryMetrics:
    if len(t) == 0:
        raise ValueError("empty trajectory")
    return TrajectoryMetrics(float(np.max(t.i)), float(t.z[-1]), t.final_state)


def hitting_time(t: Trajectory, region: Callable[[State], bool]) -> Optional[float]:
    """First sample instant whose state satisfies ``region``; None if never."""
    for k in range(len(t)):
        if region(t.state_at(k)):
            return float(t.times[k])
    return None


def free_peak(s, i, p):
    """Supremum of ``i`` along the uncontrolled flow from ``(s, i)``.

    Uses the first integral ``s + i - (gamma/beta) ln s`` of the ``u = 0``
    system; the maximum of ``i`` is attained where ``s = gamma/beta``.
    """
    c = p.s_herd
    return np.where(s > c, s + i - c * (1 + np.log(np.maximum(s, POSITIVITY_FLOOR) / c)), i)


def first_integral(s, i, p):
    return s + i - p.s_herd * np.log(s)
