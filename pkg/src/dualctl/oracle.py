"""Brute-force search over piecewise-constant open-loop controls.

Both value functions are bounded from above by searching a finite control
family: every candidate is simulated with fixed-step RK4 on a uniform
partition of ``[0, horizon]`` (zero control afterwards, with the remaining
peak of the free flow taken from its first integral).  Small families are
enumerated exhaustively, larger ones sampled with a seeded generator.  The
best few candidates are then refined: each round halves every piece and
runs a coordinate pass followed by seeded multi-coordinate perturbations.

Every reported value comes with the control achieving it, so values are
certificates: re-simulating the stored control reproduces them.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numba
import numpy as np

from .dynamics import EpidemicParams, PiecewiseControl, State, free_peak, trajectory_metrics
from .greedy import GreedyConfig, simulate_greedy
from .weights import CostWeight

INFINITE = math.inf
PEAK_MARGIN = 1e-6
BUDGET_MARGIN = 1e-9
_MAX_ENUMERATION = 10**6
_STEPS_PER_HORIZON = 480


@dataclass(frozen=True)
class OracleConfig:
    pieces: int = 8
    level_count: int = 5
    horizon: float = 400.0
    refinement_rounds: int = 3
    seed: int = 0
    restarts: int = 4
    perturbation_batches: int = 80
    batch_size: int = 256
    random_candidates: int = 200_000

    def __post_init__(self):
        for name in ("pieces", "level_count", "refinement_rounds", "restarts", "batch_size"):
            if getattr(self, name) < (0 if name == "refinement_rounds" else 1):
                raise ValueError(f"{name} must be positive")
        if self.level_count < 2:
            raise ValueError("level_count must be at least 2")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class OracleResult:
    value: float
    best: Optional[PiecewiseControl]
    peak: float
    cost: float
    seed: int
    history: list = field(default_factory=list)
    note: str = (
        "piecewise-constant search: the value is an upper bound on the optimum over all measurable controls"
    )

    def to_dict(self):
        return {
            "value": _json_float(self.value),
            "peak": _json_float(self.peak),
            "cost": _json_float(self.cost),
            "seed": self.seed,
            "history": [_json_float(v) for v in self.history],
            "levels": list(self.best.levels) if self.best else None,
            "horizon": self.best.horizon if self.best else None,
            "note": self.note,
        }


def _json_float(v):
    return "inf" if v == math.inf else float(v)


# batch simulation ---------------------------------------------------------


@numba.njit(cache=True, fastmath=False)
def _simulate_batch_affine(levels, piece_len, sub, s0, i0, beta, gamma, la, lbs, lbi):
    n, pieces = levels.shape
    h = piece_len / sub
    peak = np.empty(n)
    cost = np.empty(n)
    s_end = np.empty(n)
    i_end = np.empty(n)
    for c in range(n):
        s = s0
        i = i0
        z = 0.0
        pk = i0
        for k in range(pieces):
            u = levels[c, k]
            a = beta * (1.0 - u)
            for _ in range(sub):
                f1 = a * s * i
                k1s = -f1
                k1i = f1 - gamma * i
                k1z = (la + lbs * s + lbi * i) * u
                s2 = s + 0.5 * h * k1s
                i2 = i + 0.5 * h * k1i
                f2 = a * s2 * i2
                k2s = -f2
                k2i = f2 - gamma * i2
                k2z = (la + lbs * s2 + lbi * i2) * u
                s3 = s + 0.5 * h * k2s
                i3 = i + 0.5 * h * k2i
                f3 = a * s3 * i3
                k3s = -f3
                k3i = f3 - gamma * i3
                k3z = (la + lbs * s3 + lbi * i3) * u
                s4 = s + h * k3s
                i4 = i + h * k3i
                f4 = a * s4 * i4
                k4s = -f4
                k4i = f4 - gamma * i4
                k4z = (la + lbs * s4 + lbi * i4) * u
                s = s + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
                i = i + h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
                z = z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
                if s < 1e-12:
                    s = 1e-12
                if i < 1e-12:
                    i = 1e-12
                if i > pk:
                    pk = i
        peak[c] = pk
        cost[c] = z
        s_end[c] = s
        i_end[c] = i
    return peak, cost, s_end, i_end


def _simulate_batch_generic(levels, piece_len, sub, s0, i0, p, lam):
    n, pieces = levels.shape
    h = piece_len / sub
    s = np.full(n, s0)
    i = np.full(n, i0)
    z = np.zeros(n)
    pk = i.copy()
    for k in range(pieces):
        u = levels[:, k]
        a = p.beta * (1 - u)
        for _ in range(sub):
            def f(ss, ii):
                flux = a * ss * ii
                return -flux, flux - p.gamma * ii, lam(ss, ii) * u

            k1 = f(s, i)
            k2 = f(s + 0.5 * h * k1[0], i + 0.5 * h * k1[1])
            k3 = f(s + 0.5 * h * k2[0], i + 0.5 * h * k2[1])
            k4 = f(s + h * k3[0], i + h * k3[1])
            s = np.maximum(s + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]), 1e-12)
            i = np.maximum(i + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]), 1e-12)
            z = z + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            pk = np.maximum(pk, i)
    return pk, z, s, i


def simulate_controls(levels, horizon, x0: State, p: EpidemicParams, lam: CostWeight):
    """Peak and total cost for each row of ``levels`` (shape ``(n, pieces)``).

    The peak includes the supremum of the free flow after ``horizon``.
    """
    levels = np.ascontiguousarray(np.atleast_2d(levels), dtype=float)
    pieces = levels.shape[1]
    sub = max(1, int(math.ceil(_STEPS_PER_HORIZON / pieces)))
    piece_len = horizon / pieces
    affine = lam.affine
    if affine is not None:
        pk, z, s, i = _simulate_batch_affine(levels, piece_len, sub, x0.s, x0.i, p.beta, p.gamma, *affine)
    else:
        pk, z, s, i = _simulate_batch_generic(levels, piece_len, sub, x0.s, x0.i, p, lam)
    pk = np.maximum(pk, free_peak(s, i, p))
    return pk, z


def evaluate_control(control: PiecewiseControl, x0: State, p: EpidemicParams, lam: CostWeight):
    """``(peak, cost)`` of one stored control, by the same simulation the search uses."""
    pk, z = simulate_controls(np.array([control.levels]), control.horizon, x0, p, lam)
    return float(pk[0]), float(z[0])


# search -------------------------------------------------------------------


def _level_grid(p, cfg):
    return np.linspace(0.0, p.ubar, cfg.level_count)


@lru_cache(maxsize=32)
def _screen(x0: State, p: EpidemicParams, lam: CostWeight, cfg: OracleConfig):
    """Coarse family and its simulated peaks and costs (cached per problem)."""
    grid = _level_grid(p, cfg)
    if cfg.level_count**cfg.pieces <= _MAX_ENUMERATION:
        family = np.array(list(itertools.product(grid, repeat=cfg.pieces)))
    else:
        rng = np.random.default_rng(cfg.seed)
        family = grid[rng.integers(0, cfg.level_count, size=(cfg.random_candidates, cfg.pieces))]
        family[0] = 0.0
    peaks, costs = simulate_controls(family, cfg.horizon, x0, p, lam)
    for arr in (family, peaks, costs):
        arr.setflags(write=False)
    return family, peaks, costs


class _Problem:
    """Objective/constraint pair: ``lower`` minimises cost under a peak cap, ``upper`` the reverse."""

    def __init__(self, kind, level):
        self.kind = kind
        self.level = level

    def score(self, peaks, costs):
        if self.kind == "lower":
            feasible = peaks <= self.level + PEAK_MARGIN
            return np.where(feasible, costs, np.inf)
        feasible = costs <= self.level + BUDGET_MARGIN
        return np.where(feasible, peaks, np.inf)


def _refine(start, problem, x0, p, lam, cfg, rng):
    best = np.array(start, dtype=float)
    pk, z = simulate_controls(best[None], cfg.horizon, x0, p, lam)
    best_val = float(problem.score(pk, z)[0])
    history = [best_val]
    coord_grid = np.linspace(0.0, p.ubar, 25)
    for _ in range(cfg.refinement_rounds):
        best = np.repeat(best, 2)
        n = best.size
        for k in range(n):
            cand = np.repeat(best[None], coord_grid.size, axis=0)
            cand[:, k] = coord_grid
            sc = problem.score(*simulate_controls(cand, cfg.horizon, x0, p, lam))
            j = int(np.argmin(sc))
            if sc[j] < best_val:
                best_val, best = float(sc[j]), cand[j]
        sigma = 0.05 * p.ubar / 0.6
        for _ in range(cfg.perturbation_batches):
            mask = rng.random((cfg.batch_size, n)) < 0.3
            cand = np.clip(best + sigma * rng.standard_normal((cfg.batch_size, n)) * mask, 0.0, p.ubar)
            sc = problem.score(*simulate_controls(cand, cfg.horizon, x0, p, lam))
            j = int(np.argmin(sc))
            if sc[j] < best_val:
                best_val, best = float(sc[j]), cand[j]
                sigma *= 1.2
            else:
                sigma = max(sigma * 0.85, 1e-3)
        history.append(best_val)
    return best, best_val, history


def _search(kind, level, x0, p, lam, cfg):
    family, peaks, costs = _screen(x0, p, lam, cfg)
    problem = _Problem(kind, level)
    scores = problem.score(peaks, costs)
    order = np.argsort(scores, kind="stable")
    starts = [k for k in order[: cfg.restarts] if np.isfinite(scores[k])]
    if not starts:
        return OracleResult(INFINITE, None, INFINITE, INFINITE, cfg.seed, [INFINITE])
    rng = np.random.default_rng(cfg.seed)
    best_val, best_levels, best_hist = np.inf, None, []
    for k in starts:
        levels, val, hist = _refine(family[k], problem, x0, p, lam, cfg, rng)
        if val < best_val:
            best_val, best_levels, best_hist = val, levels, hist
    control = PiecewiseControl(cfg.horizon, tuple(best_levels))
    peak, cost = evaluate_control(control, x0, p, lam)
    return OracleResult(best_val, control, peak, cost, cfg.seed, best_hist)


def brute_force_lower_value(x0: State, istar, p: EpidemicParams, lam: CostWeight, cfg: OracleConfig = OracleConfig()):
    """Smallest budget found among controls whose peak stays below ``istar``."""
    x0.check()
    return _search("lower", float(istar), x0, p, lam, cfg)


def brute_force_upper_value(x0: State, budget, p: EpidemicParams, lam: CostWeight, cfg: OracleConfig = OracleConfig()):
    """Smallest peak found among controls whose budget is at most ``budget``."""
    x0.check()
    if budget < 0:
        raise ValueError("budget must be non-negative")
    return _search("upper", float(budget), x0, p, lam, cfg)


# greedy transfer ------------------------------------------------------------


@dataclass
class TransferReport:
    x0: State
    istar: float
    greedy_budget: float
    greedy_peak: float
    greedy_feasible_lower: bool
    greedy_feasible_upper: bool
    oracle_lower: OracleResult
    oracle_upper: OracleResult
    lower_gap: float
    upper_gap: float
    lower_beaten_by: float
    upper_beaten_by: float
    passed: bool
    gap_tol: float
    slack: float

    def to_dict(self):
        return {
            "x0": [self.x0.s, self.x0.i],
            "istar": self.istar,
            "greedy_budget": self.greedy_budget,
            "greedy_peak": self.greedy_peak,
            "greedy_feasible_lower": self.greedy_feasible_lower,
            "greedy_feasible_upper": self.greedy_feasible_upper,
            "oracle_lower": self.oracle_lower.to_dict(),
            "oracle_upper": self.oracle_upper.to_dict(),
            "lower_gap": _json_float(self.lower_gap),
            "upper_gap": _json_float(self.upper_gap),
            "lower_beaten_by": _json_float(self.lower_beaten_by),
            "upper_beaten_by": _json_float(self.upper_beaten_by),
            "gap_tol": self.gap_tol,
            "slack": self.slack,
            "passed": self.passed,
        }


def _relative_gap(oracle_value, reference):
    if oracle_value == INFINITE:
        return INFINITE
    if reference == 0:
        return 0.0 if oracle_value <= 1e-12 else INFINITE
    return (oracle_value - reference) / reference


def control_transfer_check(
    x0: State,
    istar,
    p: EpidemicParams,
    lam: CostWeight,
    cfg: OracleConfig = OracleConfig(),
    greedy_step: float = 0.01,
    gap_tol: float = 0.05,
    slack: float = 1e-3,
) -> TransferReport:
    """Greedy control against the oracle in both problems at its own pivot.

    The pivot is ``(istar, g0)`` with ``g0`` the greedy budget; the peak
    reference is the greedy trajectory's supremum (``istar`` unless ``x0``
    is already invariant).
    """
    traj = simulate_greedy(x0, GreedyConfig(istar, step=greedy_step), p, lam)
    metrics = trajectory_metrics(traj)
    g0 = metrics.total_cost
    h0 = max(metrics.peak_i, float(free_peak(metrics.final_state.s, metrics.final_state.i, p)))
    lower = brute_force_lower_value(x0, istar, p, lam, cfg)
    upper = brute_force_upper_value(x0, g0, p, lam, cfg)
    lower_gap = _relative_gap(lower.value, g0)
    upper_gap = _relative_gap(upper.value, h0)
    lower_beaten = g0 - lower.value
    upper_beaten = h0 - upper.value
    passed = (
        lower_beaten <= slack
        and upper_beaten <= slack
        and lower_gap <= gap_tol
        and upper_gap <= gap_tol
    )
    return TransferReport(
        x0=x0,
        istar=float(istar),
        greedy_budget=g0,
        greedy_peak=h0,
        greedy_feasible_lower=h0 <= istar + PEAK_MARGIN,
        greedy_feasible_upper=True,
        oracle_lower=lower,
        oracle_upper=upper,
        lower_gap=lower_gap,
        upper_gap=upper_gap,
        lower_beaten_by=lower_beaten,
        upper_beaten_by=upper_beaten,
        passed=bool(passed),
        gap_tol=gap_tol,
        slack=slack,
    )
