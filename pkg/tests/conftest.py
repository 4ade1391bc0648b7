import pytest

from qkd_logic.fibergrid import ChannelAssignment, ChannelPlan, Direction, FrequencyGrid, Role, hexagonal_topology
from qkd_logic.qkdrate import DecoyParams, DetectorSpec, LinkScenario
from qkd_logic.scenario import calibrate_baseline
from qkd_logic.xtmodel import FilterSpec, XtalkModel

BASELINE_SKR = 10900.0
BASELINE_QBER = 0.0062


def build_field_plan(power_dbm=0.0, direction=Direction.COUNTER):
    """Quantum 193500 GHz in core 3, two classical channels in each of cores 1, 2, 4, sync 193300 GHz"""
    assignments = [
        ChannelAssignment(3, 193500, Role.QUANTUM),
        ChannelAssignment(3, 193300, Role.SYNC),
    ]
    for core in (1, 2, 4):
        for freq in (193400, 193600):
            assignments.append(ChannelAssignment(core, freq, Role.CLASSICAL, direction, power_dbm))
    return ChannelPlan(hexagonal_topology(), FrequencyGrid(193400, 200, 2), tuple(assignments), 3)


@pytest.fixture
def topology():
    return hexagonal_topology()


@pytest.fixture
def field_grid():
    return FrequencyGrid(193400, 200, 2)


@pytest.fixture
def field_plan():
    return build_field_plan()


@pytest.fixture
def synthetic_model():
    return XtalkModel(chi_co=8.4, chi_counter=0.84, reference_filter_loss_db=0.0, dark_floor_cps=10.0,
                      chi_co_filtered=0.672, chi_counter_filtered=0.0672)


@pytest.fixture
def narrow_filter():
    return FilterSpec(insertion_loss_db=2.1, passband_width_nm=0.6)


@pytest.fixture
def params():
    return DecoyParams()


@pytest.fixture
def detector():
    return DetectorSpec()


@pytest.fixture(scope="session")
def baseline():
    """(e_detector, fixed_losses_db) reproducing the back-to-back SKR and QBER at 1 km"""
    reference = LinkScenario(1.0, 0.23, 15.0, build_field_plan().without_classical(), None, DetectorSpec())
    return calibrate_baseline(BASELINE_SKR, BASELINE_QBER, reference, DecoyParams())


@pytest.fixture
def calibrated(baseline):
    """Scenario template at 1 km plus decoy parameters, both carrying the calibrated baseline"""
    e_d, loss = baseline
    scenario = LinkScenario(1.0, 0.23, loss, build_field_plan(), None, DetectorSpec())
    return scenario, DecoyParams(e_detector=e_d)
