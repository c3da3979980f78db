"""Run configuration: one JSON document describing a whole experiment."""

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import EpidemicParams, State
from .exceptions import ConfigError, DomainError
from .oracle import OracleConfig
from .weights import CostWeight

ENV_OUTPUT_DIR = "DUALCTL_OUTPUT_DIR"
ENV_SEED = "DUALCTL_SEED"


@dataclass(frozen=True)
class GridSpec:
    """``num`` evenly spaced points on ``[start, stop]``."""

    start: float
    stop: float
    num: int

    def __post_init__(self):
        if self.num < 2 or not self.stop > self.start:
            raise ConfigError(f"grid needs num >= 2 and stop > start, got {self}")

    def values(self):
        return np.linspace(self.start, self.stop, self.num)

    def to_dict(self):
        return {"start": self.start, "stop": self.stop, "num": self.num}


@dataclass(frozen=True)
class SimulateSpec:
    mode: str = "greedy"
    levels: tuple = ()
    horizon: float = 400.0
    step: float = 0.01

    def __post_init__(self):
        if self.mode not in ("greedy", "open_loop"):
            raise ConfigError(f"simulate.mode must be 'greedy' or 'open_loop', got {self.mode!r}")
        if self.mode == "open_loop" and not self.levels:
            raise ConfigError("open_loop simulation needs at least one control level")
        if not (self.horizon > 0 and self.step > 0):
            raise ConfigError("simulate.horizon and simulate.step must be positive")


@dataclass(frozen=True)
class Tolerances:
    duality: float = 2.0  # multiple of the grid resolution
    oracle_gap: float = 0.05
    oracle_slack: float = 1e-3
    envelope: float = 0.005
    green: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"tolerance {f.name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class DualitySpec:
    transfer_check: bool = True
    lsc: bool = True
    oracle_upper_knots: int = 0
    q_grid: tuple = tuple(10.0**-k for k in range(1, 7))
    greedy_step: float = 0.05

    def __post_init__(self):
        if self.oracle_upper_knots < 0:
            raise ConfigError("duality.oracle_upper_knots must be non-negative")
        if any(q <= 0 for q in self.q_grid):
            raise ConfigError("duality.q_grid must hold positive rates")


@dataclass(frozen=True)
class RunConfig:
    params: EpidemicParams
    lam: CostWeight
    x0: State
    istar: float
    peak_grid: GridSpec
    budget_grid: Optional[GridSpec] = None
    budget: Optional[float] = None
    simulate: SimulateSpec = field(default_factory=SimulateSpec)
    curve_which: str = "lower"
    curve_source: str = "explicit"
    oracle_problem: str = "lower"
    tolerances: Tolerances = field(default_factory=Tolerances)
    duality: DualitySpec = field(default_factory=DualitySpec)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.istar < 1:
            raise ConfigError(f"istar must lie in (0, 1), got {self.istar}")
        if self.curve_which not in ("lower", "upper"):
            raise ConfigError(f"curve.which must be 'lower' or 'upper', got {self.curve_which!r}")
        allowed = ("explicit", "oracle") if self.curve_which == "lower" else ("inverse_of_lower", "oracle")
        if self.curve_source not in allowed:
            raise ConfigError(f"curve.source for a {self.curve_which} curve must be one of {allowed}")
        if self.oracle_problem not in ("lower", "upper"):
            raise ConfigError("oracle.problem must be 'lower' or 'upper'")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be non-negative")
        if self.budget_grid is not None and self.budget_grid.start < 0:
            raise ConfigError("budget grid must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def oracle_cfg(self):
        return dataclasses.replace(self.oracle, seed=self.seed)

    # serialization -----------------------------------------------------

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        try:
            p = d["params"]
            params = EpidemicParams(float(p["beta"]), float(p["gamma"]), float(p["ubar"]))
            x0 = State(*(float(v) for v in d["x0"]))
            x0.check()
            grids = d.get("grids", {})
            peak = GridSpec(**grids["peak"]) if "peak" in grids else GridSpec(0.001, 0.2, 80)
            budget_grid = GridSpec(**grids["budget"]) if grids.get("budget") else None
            sim = dict(d.get("simulate", {}))
            if "levels" in sim:
                sim["levels"] = tuple(float(v) for v in sim["levels"])
            curve = d.get("curve", {})
            duality = dict(d.get("duality", {}))
            if "q_grid" in duality:
                duality["q_grid"] = tuple(float(q) for q in duality["q_grid"])
            oracle = dict(d.get("oracle", {}))
            problem = oracle.pop("problem", "lower")
            return cls(
                params=params,
                lam=CostWeight.from_dict(d.get("lambda", {"tag": "constant", "coefficients": [1.0]})),
                x0=x0,
                istar=float(d["istar"]),
                peak_grid=peak,
                budget_grid=budget_grid,
                budget=None if d.get("budget") is None else float(d["budget"]),
                simulate=SimulateSpec(**sim),
                curve_which=curve.get("which", "lower"),
                curve_source=curve.get("source", "explicit" if curve.get("which", "lower") == "lower" else "inverse_of_lower"),
                oracle_problem=problem,
                tolerances=Tolerances(**d.get("tolerances", {})),
                duality=DualitySpec(**duality),
                oracle=OracleConfig(**oracle),
                output_dir=str(d.get("output_dir", "out")),
                seed=int(d.get("seed", 0)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError, DomainError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_dict(self):
        oracle = self.oracle.to_dict()
        oracle["problem"] = self.oracle_problem
        return {
            "params": {"beta": self.params.beta, "gamma": self.params.gamma, "ubar": self.params.ubar},
            "lambda": self.lam.to_dict(),
            "x0": [self.x0.s, self.x0.i],
            "istar": self.istar,
            "budget": self.budget,
            "grids": {
                "peak": self.peak_grid.to_dict(),
                "budget": self.budget_grid.to_dict() if self.budget_grid else None,
            },
            "simulate": {
                "mode": self.simulate.mode,
                "levels": list(self.simulate.levels),
                "horizon": self.simulate.horizon,
                "step": self.simulate.step,
            },
            "curve": {"which": self.curve_which, "source": self.curve_source},
            "tolerances": dataclasses.asdict(self.tolerances),
            "duality": {**dataclasses.asdict(self.duality), "q_grid": list(self.duality.q_grid)},
            "oracle": oracle,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def with_overrides(self, output_dir=None, seed=None, environ=None):
        """Apply environment then explicit overrides of ``output_dir`` and ``seed``."""
        env = os.environ if environ is None else environ
        out, sd = self.output_dir, self.seed
        if env.get(ENV_OUTPUT_DIR):
            out = env[ENV_OUTPUT_DIR]
        if env.get(ENV_SEED):
            try:
                sd = int(env[ENV_SEED])
            except ValueError as exc:
                raise ConfigError(f"{ENV_SEED} must be an integer") from exc
        if output_dir is not None:
            out = str(output_dir)
        if seed is not None:
            sd = int(seed)
        return dataclasses.replace(self, output_dir=out, seed=sd)

    def ensure_output_dir(self):
        path = Path(self.output_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output_dir {path} is not writable: {exc}") from exc
        if not os.access(path, os.W_OK):
            raise ConfigError(f"output_dir {path} is not writable")
        return path
