import math

import numpy as np
import pytest

from dualctl._numerics import bisect_root, converged_quadrature, gauss_legendre
from dualctl.exceptions import DomainError, QuadratureError


def test_bisect_root():
    assert bisect_root(lambda x: x * x - 2, 0.0, 2.0) == pytest.approx(math.sqrt(2), abs=1e-12)
    with pytest.raises(DomainError):
        bisect_root(lambda x: x * x + 1, -1.0, 1.0)


def test_gauss_legendre_exact_on_polynomials():
    assert gauss_legendre(lambda x: x**7, 0.0, 2.0, order=4, panels=1) == pytest.approx(2**8 / 8, rel=1e-14)


def test_converged_quadrature():
    assert converged_quadrature(np.log, 1.0, math.e) == pytest.approx(1.0, abs=1e-13)
    assert converged_quadrature(np.sin, 0.0, 0.0) == 0.0


def test_quadrature_failure_is_reported():
    with pytest.raises(QuadratureError):
        converged_quadrature(lambda x: np.sign(np.sin(1e5 * x)), 0.0, 1.0, order=2, panels=1, max_panels=8)
