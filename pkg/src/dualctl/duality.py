"""Sampled value curves and their generalized-inverse duality.

A lower curve maps a peak level to the least budget that keeps the peak
below it; an upper curve maps a budget to the least achievable peak.  Both
are stored as knots and values and evaluated by linear interpolation.
Values outside the domain are ``INFINITE`` (``math.inf``), never a large
finite number.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cost import DEFAULT_QUADRATURE, discounted_cost, explicit_cost
from .dynamics import EpidemicParams, PiecewiseControl, State, hitting_time, integrate, trajectory_metrics
from .geometry import RegionTag, classify, dom_min_peak
from .greedy import GreedyConfig, greedy_budget, simulate_greedy
from .oracle import OracleConfig, brute_force_lower_value, brute_force_upper_value, simulate_controls
from .weights import CostWeight

INFINITE = math.inf
LOWER, UPPER = "lower", "upper"


@dataclass
class ValueCurve:
    kind: str
    knots: np.ndarray
    values: np.ndarray
    x0: State
    provenance: str = "explicit"

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in (LOWER, UPPER):
            raise ValueError(f"curve kind must be 'lower' or 'upper', got {self.kind!r}")
        if self.knots.shape != self.values.shape or self.knots.ndim != 1:
            raise ValueError("knots and values must be 1-d arrays of equal length")
        if self.knots.size and np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")

    @property
    def is_infinite(self):
        return np.isinf(self.values)

    @property
    def finite(self):
        return ~self.is_infinite

    @property
    def domain_start(self):
        idx = np.flatnonzero(self.finite)
        return float(self.knots[idx[0]]) if idx.size else INFINITE

    def __call__(self, level):
        """Linear interpolation; ``INFINITE`` left of the first finite knot, flat right of the last."""
        if not self.knots.size:
            raise ValueError("empty curve")
        if level == INFINITE:
            return float(self.values[-1])
        k, v = self.knots, self.values
        if level < k[0]:
            return INFINITE if self.kind == LOWER or np.isinf(v[0]) else float(v[0])
        if level >= k[-1]:
            return float(v[-1])
        j = int(np.searchsorted(k, level, side="right"))
        lo, hi = j - 1, j
        if np.isinf(v[lo]) or np.isinf(v[hi]):
            return INFINITE if level < k[hi] or np.isinf(v[hi]) else float(v[hi])
        w = (level - k[lo]) / (k[hi] - k[lo])
        return float(v[lo] + w * (v[hi] - v[lo]))

    def resolution(self):
        """Largest knot spacing over the finite part of the curve."""
        k = self.knots[self.finite]
        return float(np.max(np.diff(k))) if k.size > 1 else 0.0

    def rows(self):
        return [(float(k), float(v), bool(np.isinf(v))) for k, v in zip(self.knots, self.values)]


def generalized_inverse(curve: ValueCurve, level) -> float:
    """``inf {k : curve(k) <= level}`` on the interpolated curve."""
    if not curve.knots.size:
        raise ValueError("empty curve")
    k, v = curve.knots, curve.values
    hits = np.flatnonzero(v <= level)
    if not hits.size:
        return INFINITE
    j = int(hits[0])
    if j == 0 or np.isinf(v[j - 1]):
        return float(k[j])
    # v[j-1] > level >= v[j]
    frac = (v[j - 1] - level) / (v[j - 1] - v[j])
    return float(k[j - 1] + frac * (k[j] - k[j - 1]))


def _with_domain_knot(grid, x0, p):
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("peak grid must be strictly increasing")
    start = dom_min_peak(x0, p)
    if grid[0] < start < grid[-1] and not np.any(np.isclose(grid, start, rtol=0, atol=1e-15)):
        grid = np.sort(np.append(grid, start))
    return grid, start


def build_lower_curve(
    x0: State,
    peak_grid: Sequence[float],
    p: EpidemicParams,
    lam: CostWeight,
    source: str = "explicit",
    oracle_cfg: Optional[OracleConfig] = None,
    quad=DEFAULT_QUADRATURE,
) -> ValueCurve:
    """Lower value curve on ``peak_grid``; the domain start is inserted as a knot."""
    knots, start = _with_domain_knot(peak_grid, x0, p)
    values = np.full(knots.shape, INFINITE)
    for n, h in enumerate(knots):
        if h < start:
            continue
        if source == "explicit":
            values[n] = explicit_cost(x0, h, p, lam, quad)
        elif source == "oracle":
            values[n] = brute_force_lower_value(x0, h, p, lam, oracle_cfg or OracleConfig()).value
        else:
            raise ValueError(f"unknown lower-curve source {source!r}")
    return ValueCurve(LOWER, knots, values, x0, source)


def build_upper_curve(
    x0: State,
    budget_grid: Sequence[float],
    p: EpidemicParams,
    lam: CostWeight,
    source: str = "inverse_of_lower",
    lower: Optional[ValueCurve] = None,
    oracle_cfg: Optional[OracleConfig] = None,
) -> ValueCurve:
    """Upper value curve on ``budget_grid``, by inverting ``lower`` or by the oracle."""
    knots = np.asarray(budget_grid, dtype=float)
    if knots.size and (knots[0] < 0 or np.any(np.diff(knots) <= 0)):
        raise ValueError("budget grid must be non-negative and strictly increasing")
    if source == "inverse_of_lower":
        if lower is None:
            raise ValueError("inverse_of_lower needs the lower curve")
        values = [generalized_inverse(lower, g) for g in knots]
    elif source == "oracle":
        cfg = oracle_cfg or OracleConfig()
        values = [brute_force_upper_value(x0, g, p, lam, cfg).value for g in knots]
    else:
        raise ValueError(f"unknown upper-curve source {source!r}")
    return ValueCurve(UPPER, knots, np.array(values, dtype=float), x0, source)


# checks -------------------------------------------------------------------


@dataclass
class DualityReport:
    max_roundtrip_error_lower: float
    max_roundtrip_error_upper: float
    resolution_budget: float
    resolution_peak: float
    tol: float
    monotonicity_ok: bool
    constancy_intervals: list
    constancy_ok: bool
    pivot_checks: list
    pivots_ok: bool
    empty_domain: bool = False
    notes: list = field(default_factory=list)

    @property
    def roundtrip_ok(self):
        return bool(
            self.max_roundtrip_error_lower <= self.tol * self.resolution_budget
            and self.max_roundtrip_error_upper <= self.tol * self.resolution_peak
        )

    @property
    def passed(self):
        return self.roundtrip_ok and self.monotonicity_ok and self.constancy_ok and self.pivots_ok

    def to_dict(self):
        return {
            "max_roundtrip_error_lower": self.max_roundtrip_error_lower,
            "max_roundtrip_error_upper": self.max_roundtrip_error_upper,
            "resolution_budget": self.resolution_budget,
            "resolution_peak": self.resolution_peak,
            "tol": self.tol,
            "roundtrip_ok": self.roundtrip_ok,
            "monotonicity_ok": self.monotonicity_ok,
            "constancy_ok": self.constancy_ok,
            "constancy_intervals": [
                {"curve": kind, "lo": lo, "hi": hi, "value": val} for kind, lo, hi, val in self.constancy_intervals
            ],
            "pivot_checks": [
                {"x0": [x.s, x.i], "istar": h, "g0": g, "recovered_peak": r, "ok": ok}
                for x, h, g, r, ok in self.pivot_checks
            ],
            "pivots_ok": self.pivots_ok,
            "empty_domain": self.empty_domain,
            "notes": list(self.notes),
            "passed": self.passed,
        }


def is_non_increasing(curve: ValueCurve) -> bool:
    v = curve.values
    inf = np.isinf(v)
    # infinite values may only precede the finite ones
    if inf.any() and np.any(np.diff(inf.astype(int)) > 0):
        return False
    f = v[~inf]
    return bool(np.all(np.diff(f) <= 0))


def constancy_intervals(curve: ValueCurve, rtol=1e-12):
    """Maximal runs of consecutive finite knots carrying the same value."""
    out = []
    k, v = curve.knots, curve.values
    n = len(k)
    a = 0
    while a < n:
        if np.isinf(v[a]):
            a += 1
            continue
        b = a
        while b + 1 < n and np.isfinite(v[b + 1]) and abs(v[b + 1] - v[a]) <= rtol * max(1.0, abs(v[a])):
            b += 1
        if b > a:
            out.append((curve.kind, float(k[a]), float(k[b]), float(v[a])))
        a = b + 1
    return out


def _roundtrip(first: ValueCurve, second: ValueCurve):
    """Max of ``|first(second(first(k))) - first(k)|`` over knots where the chain stays sampled."""
    worst = 0.0
    lo2, hi2 = second.knots[0], second.knots[-1]
    for kk, vv in zip(first.knots, first.values):
        if np.isinf(vv) or not lo2 <= vv <= hi2:
            continue
        back = second(vv)
        if np.isinf(back) or not first.knots[0] <= back <= first.knots[-1]:
            continue
        again = first(back)
        if np.isinf(again):
            continue
        worst = max(worst, float(abs(again - vv)))
    return worst


def _constancy_check(curve: ValueCurve, other: ValueCurve, tol_value):
    """For every knot ``k``, ``curve`` is flat on ``[other(curve(k)), k]`` up to ``tol_value``."""
    ok = True
    for kk, vv in zip(curve.knots, curve.values):
        if np.isinf(vv) or not other.knots[0] <= vv <= other.knots[-1]:
            continue
        left = other(vv)
        if np.isinf(left) or left > kk:
            continue
        left = max(left, curve.knots[0])
        inside = curve.values[(curve.knots >= left) & (curve.knots <= kk)]
        probe = np.append(inside, curve(left))
        if np.any(np.abs(probe - vv) > tol_value):
            ok = False
    return ok


def check_duality(
    lower: ValueCurve,
    upper: ValueCurve,
    tol: float = 2.0,
    pivots: Sequence[tuple] = (),
) -> DualityReport:
    """Round-trip, monotonicity, constancy and pivot checks.

    ``tol`` is a multiple of the grid resolution on each axis (knot spacing
    of the peak grid for peak errors, of the budget grid for budget
    errors).  ``pivots`` holds ``(istar, g0)`` pairs computed independently,
    typically from the greedy budget; each must map back to ``istar``.
    """
    if lower.x0 != upper.x0:
        raise ValueError("curves belong to different initial states")
    res_peak = lower.resolution()
    res_budget = upper.resolution()
    notes = []
    empty = not lower.finite.any()
    if empty:
        notes.append("lower curve is infinite on the whole peak grid: empty domain, checks are vacuous")
        return DualityReport(0.0, 0.0, res_budget, res_peak, tol, True, [], True, [], True, True, notes)

    err_lower = _roundtrip(lower, upper)
    err_upper = _roundtrip(upper, lower)
    mono = is_non_increasing(lower) and is_non_increasing(upper)

    intervals = constancy_intervals(lower) + constancy_intervals(upper)
    constancy_ok = _constancy_check(upper, lower, tol * res_peak) and _constancy_check(
        lower, upper, tol * res_budget
    )

    checks = []
    for istar, g0 in pivots:
        recovered = upper(g0)
        ok = abs(recovered - istar) <= tol * res_peak
        checks.append((lower.x0, float(istar), float(g0), float(recovered), bool(ok)))
    pivots_ok = all(c[-1] for c in checks)
    return DualityReport(
        err_lower, err_upper, res_budget, res_peak, tol, mono, intervals, constancy_ok, checks, pivots_ok, False, notes
    )


def greedy_pivots(x0: State, istars: Sequence[float], p, lam, step=0.01):
    """``(istar, greedy budget)`` pairs for viable, non-invariant levels."""
    out = []
    for h in istars:
        if classify(x0, h, p) in (RegionTag.BminusInv, RegionTag.ViabMinusB):
            out.append((float(h), greedy_budget(x0, GreedyConfig(h, step=step), p, lam)))
    return out


# lower semicontinuity diagnostics ---------------------------------------------


@dataclass
class LscReport:
    min_running_cost_on_L: float
    hitting_time_greedy: Optional[float]
    hitting_times_random: list
    sup_hitting_time: Optional[float]
    random_controls_tried: int
    discounted: dict
    undiscounted: float
    envelope_gap: float
    seed: int

    def to_dict(self):
        return {
            "min_running_cost_on_L": self.min_running_cost_on_L,
            "hitting_time_greedy": self.hitting_time_greedy,
            "hitting_times_random": self.hitting_times_random,
            "sup_hitting_time": self.sup_hitting_time,
            "random_controls_tried": self.random_controls_tried,
            "discounted": {f"{q:.0e}": v for q, v in self.discounted.items()},
            "undiscounted": self.undiscounted,
            "envelope_gap": self.envelope_gap,
            "seed": self.seed,
        }


def lsc_diagnostic(
    x0: State,
    istar: float,
    p: EpidemicParams,
    lam: CostWeight,
    q_grid: Sequence[float] = tuple(10.0**-k for k in range(1, 7)),
    controller: Optional[GreedyConfig] = None,
    n_random: int = 50,
    pieces: int = 8,
    horizon: float = 200.0,
    seed: int = 0,
    step: float = 0.05,
) -> LscReport:
    """Checkable side of the lower-semicontinuity criterion.

    The absorbing set is the invariance kernel at ``istar``: the running
    cost vanishes there with ``u = 0``.  Hitting times are measured along the
    greedy loop and along seeded random piecewise controls that keep the peak
    below ``istar``; the discount envelope compares ``sup_q`` of the
    discounted greedy cost with the undiscounted one.
    """
    q_grid = sorted(q_grid, reverse=True)
    if any(q <= 0 for q in q_grid):
        raise ValueError("discount rates must be positive")
    cfg = controller or GreedyConfig(istar, step=step)

    # min over U of lambda*u is attained at u = 0 on every sampled point of L
    ss, ii = np.meshgrid(np.linspace(0.01, 0.99, 25), np.linspace(1e-3, istar, 25))
    in_L = [(s, i) for s, i in zip(ss.ravel(), ii.ravel()) if s + i <= 1 and classify(State(s, i), istar, p) is RegionTag.Invariant]
    min_g = max((float(lam(s, i)) * 0.0 for s, i in in_L), default=0.0)

    def in_inv(x):
        return classify(x, istar, p) is RegionTag.Invariant

    greedy_traj = simulate_greedy(x0, cfg, p, lam, stop_when_invariant=False)
    t_greedy = hitting_time(greedy_traj, in_inv)

    rng = np.random.default_rng(seed)
    tried = 0
    times = []
    while len(times) < n_random and tried < 200 * n_random:
        batch = rng.uniform(0.0, p.ubar, size=(512, pieces))
        tried += batch.shape[0]
        peaks, _ = simulate_controls(batch, horizon, x0, p, lam)
        for row in batch[peaks <= istar]:
            traj = integrate(x0, PiecewiseControl(horizon, tuple(row)), horizon * 4, 0.1, p, lam)
            t_hit = hitting_time(traj, in_inv)
            times.append(t_hit)
            if len(times) >= n_random:
                break
    finite = [t for t in times + [t_greedy] if t is not None]

    undiscounted = trajectory_metrics(simulate_greedy(x0, cfg, p, lam, stop_when_invariant=True)).total_cost
    disc = {q: discounted_cost(x0, cfg, q, p, lam, cfg.horizon, cfg.step) for q in q_grid}
    sup_disc = max(disc.values()) if disc else 0.0
    gap = 0.0 if undiscounted == 0 else (undiscounted - sup_disc) / undiscounted
    return LscReport(
        min_running_cost_on_L=min_g,
        hitting_time_greedy=t_greedy,
        hitting_times_random=times,
        sup_hitting_time=max(finite) if finite else None,
        random_controls_tried=tried,
        discounted=disc,
        undiscounted=undiscounted,
        envelope_gap=gap,
        seed=seed,
    )
