import numpy as np
import pytest

from gatetx.calibration import calibrate
from gatetx.chip import build_default_chip
from gatetx.config import MEASURED_WIDTHS
from gatetx.transport import ConcentrationTrace


@pytest.fixture(scope="session")
def chip():
    return build_default_chip()


@pytest.fixture(scope="session")
def calibrated():
    return calibrate(MEASURED_WIDTHS)


def gaussian_trace(centres, sigma, dt, horizon, amplitude=1.0, point_id="g"):
    t = np.arange(0.0, horizon, dt)
    y = sum(amplitude * np.exp(-0.5 * ((t - c) / sigma) ** 2) for c in centres)
    return ConcentrationTrace(point_id, None, dt, y)
