import pytest

from dualctl.dynamics import EpidemicParams, State
from dualctl.weights import CostWeight

# Reference values computed independently with mpmath at 30 digits from the
# closed forms (first integrals of the constant-control flows).
PSI_07 = 0.035006802750497221
PSI_1 = -0.073917334425181862
PHI_04 = 0.0040330662299272553
B_07 = -0.050968707471229683
DOM_07 = 0.030993197249502779
THETA_0 = 0.87008266557481814
THETA_056 = 0.92608266557481814
S1_04 = 0.33775474606667217
S2_07 = 0.64760529178754945
COST_04_UNIT = 6.4917334425181862
COST_04_I = 0.36353707278101843
BARRIER_07_UNIT = 16.275428476614448
CORNER_ARC_UNIT = 31.270139363884550
COST_07_UNIT = 47.545567840498999
COST_07_I = 2.6046897089747504
FREE_PEAK_04 = 0.081966933770072745
FREE_PEAK_07 = 0.24204926492676788


@pytest.fixture
def ref():
    return EpidemicParams(1 / 3, 1 / 14, 0.6)


@pytest.fixture
def alt():
    return EpidemicParams(0.21, 0.07, 0.5)


@pytest.fixture
def unit():
    return CostWeight.constant(1.0)


@pytest.fixture
def lam_i():
    return CostWeight.linear_i(0.0, 1.0)


@pytest.fixture
def x_bminus():
    return State(0.4, 0.03)


@pytest.fixture
def x_viab():
    return State(0.7, 0.01)
