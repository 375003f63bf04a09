import pytest

from qtbmad.models import (BarrierParams, DesignVector, Device, DeviceGeometry, GridSettings,
                           PotentialParams)

# A device small enough for dual solves in every test
SMALL_CONFIG = """\
# small device for fast runs
geometry.length_nm=20
geometry.points=60
grids.energy_points=20
grids.interp_points=20
"""


@pytest.fixture
def small_device():
    return Device(geometry=DeviceGeometry(20.0, 60))


@pytest.fixture
def small_grids():
    return GridSettings(20, 20)


@pytest.fixture
def design():
    return DesignVector.from_sequence([0.3, 0.4, 0.05, 0.3, 0.6, 0.05, 0.1])


@pytest.fixture
def flat_phi():
    return PotentialParams(BarrierParams(0.0, 0.3, 0.1), BarrierParams(0.0, 0.7, 0.1))


@pytest.fixture
def single_barrier():
    """Factory: barrier 1 as given, barrier 2 switched off."""
    def _make(height, center, width, sharpness=1.0):
        return PotentialParams(BarrierParams(height, center, width, sharpness),
                               BarrierParams(0.0, 0.2, 0.05, sharpness))
    return _make


@pytest.fixture
def write_config(tmp_path):
    def _write(text, name="run.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def small_config_text():
    return SMALL_CONFIG


@pytest.fixture
def resonant_diode():
    """Two 0.2 eV, 1 nm barriers around a ~3 nm well, ground resonance near 25 meV."""
    device = Device(geometry=DeviceGeometry(20.0, 200))
    phi = PotentialParams(BarrierParams(0.2, 0.4, 0.05, 5.0), BarrierParams(0.2, 0.6, 0.05, 5.0))
    return device, phi
