import math

import numpy as np
import pytest

from mollow.errors import CapacityError, ParameterError, RegimeError
from mollow.model import (SensorSpec, SystemParams, build_model,
                          default_epsilon, dressed_splitting,
                          drive_for_target_splitting, splitting_corrected,
                          splitting_printed)

# splitting at rabi 5, resonant, gamma 1; frozen from the closed form
OMEGA_PLUS_RABI5 = 9.910934106029117
# drive that puts the splitting at 300 with emitter detuning 200
RABI_FOR_300_AT_200 = 111.80485853908218


def test_params_validation():
    with pytest.raises(ParameterError):
        SystemParams(rabi=-1.0)
    with pytest.raises(ParameterError):
        SystemParams(rabi=1.0, gamma=0.0)
    with pytest.raises(ParameterError):
        SensorSpec(frequency=0.0, linewidth=0.0)
    with pytest.raises(ParameterError):
        SensorSpec(frequency=0.0, linewidth=1.0, bundle_order=0)
    with pytest.raises(ParameterError):
        SensorSpec(frequency=0.0, linewidth=1.0, bundle_order=2, truncation=2)
    assert SensorSpec(0.0, 1.0, bundle_order=3).dim == 4


def test_splitting_closed_form_and_limits():
    assert splitting_corrected(5.0, 0.0) == pytest.approx(OMEGA_PLUS_RABI5, rel=1e-12)
    # strong drive: corrections vanish, splitting -> sqrt(4 Om^2 + det^2)
    for det in (0.0, 100.0):
        op = splitting_corrected(1e4, det)
        assert op == pytest.approx(math.sqrt(4e8 + det**2), rel=1e-6)
    # the two printed variants coincide when gamma = 1 (gamma^4 == gamma)
    assert splitting_printed(5.0, 0.0, 1.0) == pytest.approx(
        splitting_corrected(5.0, 0.0, 1.0), rel=1e-14)
    assert splitting_printed(5.0, 0.0, 2.0) != pytest.approx(
        splitting_corrected(5.0, 0.0, 2.0), rel=1e-6)
    with pytest.raises(RegimeError):
        splitting_corrected(0.05, 0.0)


def test_drive_inversion_roundtrip():
    rabi = drive_for_target_splitting(300.0, detuning=200.0)
    assert rabi == pytest.approx(RABI_FOR_300_AT_200, rel=1e-10)
    info = dressed_splitting(SystemParams(rabi=rabi, detuning=200.0))
    assert info.omega_plus == pytest.approx(300.0, rel=1e-6)
    assert info.omega0 == pytest.approx(math.sqrt(4 * rabi**2 + 200.0**2), rel=1e-12)
    assert info.peak_positions == (-info.omega_plus, 0.0, info.omega_plus)
    with pytest.raises(ParameterError):
        drive_for_target_splitting(-1.0)


def test_default_epsilon():
    p = SystemParams(rabi=5.0)
    sensors = (SensorSpec(0.0, 4.0), SensorSpec(1.0, 9.0))
    assert default_epsilon(p, sensors) == pytest.approx(0.05 * math.sqrt(4.0))
    p2 = SystemParams(rabi=5.0, gamma=2.0)
    assert default_epsilon(p2, sensors) == pytest.approx(0.05 * math.sqrt(8.0))


def test_build_model_structure():
    p = SystemParams(rabi=2.0, detuning=1.0)
    m = build_model(p, (SensorSpec(3.0, 1.0, bundle_order=2),), epsilon=0.1)
    assert m.layout.dims == (2, 3)
    H = np.asarray(m.hamiltonian if not hasattr(m.hamiltonian, "toarray")
                   else m.hamiltonian.toarray())
    assert np.allclose(H, H.conj().T)
    # energy bookkeeping: <e,0|H|e,0> = detuning, <g,1|H|g,1> = sensor freq
    exc = m.sensor_excitations()
    emitter = m.layout.local_indices(0)
    i_e0 = int(np.flatnonzero((emitter == 1) & (exc == 0))[0])
    i_g1 = int(np.flatnonzero((emitter == 0) & (exc == 1))[0])
    assert H[i_e0, i_e0].real == pytest.approx(1.0)
    assert H[i_g1, i_g1].real == pytest.approx(3.0)
    assert len(m.dissipators) == 2
    assert m.dissipators[0][0] == p.gamma


def test_dimension_cap():
    p = SystemParams(rabi=2.0)
    sensors = tuple(SensorSpec(0.0, 1.0, bundle_order=9) for _ in range(4))
    with pytest.raises(CapacityError):
        build_model(p, sensors, epsilon=0.1)
