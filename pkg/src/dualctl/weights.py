"""Running-cost weights lambda(s, i) for the budget integrand g = lambda * u."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .exceptions import ConfigError

TAGS = ("constant", "linear_s", "linear_i", "table")

_FD_STEP = 1e-6


@dataclass(frozen=True)
class CostWeight:
    """Non-negative weight on the confinement intensity.

    ``tag`` selects the family:

    * ``constant``: ``coefficients = (c,)``, lambda = c
    * ``linear_s``: ``coefficients = (a, b)``, lambda = a + b*s
    * ``linear_i``: ``coefficients = (a, b)``, lambda = a + b*i
    * ``table``: ``coefficients = (s_grid, i_grid, values)`` with ``values``
      indexed ``[s, i]``; bilinear interpolation, partials by central
      differences.

    Instances are hashable so oracle sweeps can be cached on them.
    """

    tag: str
    coefficients: tuple

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ConfigError(f"unknown cost weight tag {self.tag!r}; expected one of {TAGS}")
        coeffs = self.coefficients
        if self.tag == "constant":
            if len(coeffs) != 1 or coeffs[0] < 0:
                raise ConfigError("constant weight needs one non-negative coefficient")
        elif self.tag in ("linear_s", "linear_i"):
            if len(coeffs) != 2:
                raise ConfigError(f"{self.tag} weight needs coefficients (a, b)")
            a, b = coeffs
            # non-negative on the closed unit interval of the active variable
            if a < 0 or a + b < 0:
                raise ConfigError(f"{self.tag} weight {coeffs} is negative somewhere on Omega")
        else:
            if len(coeffs) != 3:
                raise ConfigError("table weight needs (s_grid, i_grid, values)")
            s_grid, i_grid, values = (np.asarray(c, dtype=float) for c in coeffs)
            if values.shape != (s_grid.size, i_grid.size):
                raise ConfigError("table values must have shape (len(s_grid), len(i_grid))")
            if np.any(values < 0) or not np.all(np.isfinite(values)):
                raise ConfigError("table values must be finite and non-negative")
            if np.any(np.diff(s_grid) <= 0) or np.any(np.diff(i_grid) <= 0):
                raise ConfigError("table grids must be strictly increasing")
            interp = RegularGridInterpolator(
                (s_grid, i_grid), values, method="linear", bounds_error=False, fill_value=None
            )
            object.__setattr__(self, "_interp", interp)

    # constructors -------------------------------------------------------

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", (float(c),))

    @classmethod
    def linear_s(cls, a=0.0, b=1.0):
        return cls("linear_s", (float(a), float(b)))

    @classmethod
    def linear_i(cls, a=0.0, b=1.0):
        return cls("linear_i", (float(a), float(b)))

    @classmethod
    def table(cls, s_grid, i_grid, values):
        values = np.asarray(values, dtype=float)
        return cls(
            "table",
            (
                tuple(float(v) for v in s_grid),
                tuple(float(v) for v in i_grid),
                tuple(tuple(float(v) for v in row) for row in values),
            ),
        )

    @classmethod
    def from_function(cls, func, s_grid, i_grid):
        """Tabulate an arbitrary callable ``func(s, i)`` on a tensor grid."""
        S, I = np.meshgrid(np.asarray(s_grid, float), np.asarray(i_grid, float), indexing="ij")
        return cls.table(s_grid, i_grid, func(S, I))

    @classmethod
    def from_dict(cls, d):
        try:
            tag = d["tag"]
            coeffs = d.get("coefficients", ())
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed cost weight spec: {d!r}") from exc
        if tag == "table":
            if not isinstance(coeffs, dict):
                raise ConfigError("table coefficients must be an object with s, i, values")
            return cls.table(coeffs["s"], coeffs["i"], coeffs["values"])
        return cls(tag, tuple(float(c) for c in coeffs))

    def to_dict(self):
        if self.tag == "table":
            s_grid, i_grid, values = self.coefficients
            return {
                "tag": "table",
                "coefficients": {"s": list(s_grid), "i": list(i_grid), "values": [list(r) for r in values]},
            }
        return {"tag": self.tag, "coefficients": list(self.coefficients)}

    # evaluation ---------------------------------------------------------

    @property
    def affine(self):
        """``(a, b_s, b_i)`` with lambda = a + b_s*s + b_i*i, or None for tables."""
        if self.tag == "constant":
            return (self.coefficients[0], 0.0, 0.0)
        if self.tag == "linear_s":
            return (self.coefficients[0], self.coefficients[1], 0.0)
        if self.tag == "linear_i":
            return (self.coefficients[0], 0.0, self.coefficients[1])
        return None

    def __call__(self, s, i):
        if self.tag == "table":
            s_arr, i_arr = np.broadcast_arrays(np.asarray(s, float), np.asarray(i, float))
            out = self._interp(np.stack([s_arr.ravel(), i_arr.ravel()], axis=-1)).reshape(s_arr.shape)
            out = np.maximum(out, 0.0)
            return float(out) if out.ndim == 0 else out
        a, bs, bi = self.affine
        if bs == 0.0 and bi == 0.0:
            if np.ndim(s) == 0 and np.ndim(i) == 0:
                return a
            return np.full(np.broadcast(np.asarray(s), np.asarray(i)).shape, a)
        return a + bs * s + bi * i

    def grad(self, s, i):
        """Partial derivatives ``(d lambda/ds, d lambda/di)``."""
        if self.tag == "table":
            h = _FD_STEP
            ds = (self(s + h, i) - self(s - h, i)) / (2 * h)
            di = (self(s, i + h) - self(s, i - h)) / (2 * h)
            return ds, di
        _, bs, bi = self.affine
        if np.ndim(s) == 0 and np.ndim(i) == 0:
            return bs, bi
        shape = np.broadcast(np.asarray(s), np.asarray(i)).shape
        return np.full(shape, bs), np.full(shape, bi)
