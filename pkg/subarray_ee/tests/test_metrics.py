import numpy as np
import pytest
from pydantic import ValidationError

from subarray_ee.channel_model import SystemDims
from subarray_ee.errors import InvalidArgumentError, SingularMatrixError
from subarray_ee.metrics import (
    Architecture,
    Metrics,
    PowerModel,
    consumed_power,
    dbm_to_watts,
    digital_power,
    energy_efficiency,
    hybrid_power,
    spectral_efficiency,
    watts_to_dbm,
)
from subarray_ee.tests.conftest import crandn


@pytest.mark.parametrize("dbm,watts", [(0.0, 0.001), (30.0, 1.0), (10.0, 0.01)])
def test_dbm_to_watts(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts, rel=1e-12)
    assert watts_to_dbm(watts) == pytest.approx(dbm, abs=1e-12)


def test_dbm_conversion_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        dbm_to_watts(float("inf"))
    with pytest.raises(InvalidArgumentError):
        watts_to_dbm(0.0)


def test_hybrid_circuit_power_oracle(power_model):
    """N_t = 16 with 4 RF chains per side draws 4.144 W with no signal"""
    dims = SystemDims(n_subarrays=4, antennas_per_subarray=4)
    assert hybrid_power(np.zeros((4, 4)), dims, power_model) == pytest.approx(4.144, abs=1e-12)


def test_digital_circuit_power_oracle(power_model):
    dims = SystemDims(n_subarrays=4, antennas_per_subarray=4)
    assert digital_power(np.zeros((16, 16)), dims, power_model) == pytest.approx(9.016, abs=1e-12)


def test_hybrid_power_is_affine_in_signal(small_dims, power_model, rng):
    F = crandn(rng, 4, 4)
    base = hybrid_power(np.zeros((4, 4)), small_dims, power_model)
    one = hybrid_power(F, small_dims, power_model)
    two = hybrid_power(np.sqrt(2) * F, small_dims, power_model)
    delta = small_dims.power_scale * np.linalg.norm(F) ** 2
    assert one - base == pytest.approx(power_model.eta * delta)
    assert two - one == pytest.approx(power_model.eta * delta)


def test_digital_circuit_slope(power_model):
    p = [power_model.digital_circuit(SystemDims(n_subarrays=n, antennas_per_subarray=4)) for n in (2, 3)]
    slope = 2 * (power_model.p_trfc + power_model.p_dac + power_model.p_pa)
    assert (p[1] - p[0]) / 4 == pytest.approx(slope)


def test_hybrid_cheaper_than_digital_for_reference_configs():
    for rfc in (0.043, 0.430):
        pm = PowerModel(p_trfc=rfc, p_rrfc=rfc)
        for n_rf, n_r in ((4, 4), (8, 4), (8, 8)):
            dims = SystemDims(n_subarrays=n_r, antennas_per_subarray=n_rf)
            assert pm.hybrid_circuit(dims) < pm.digital_circuit(dims)


def test_power_difference_matches_closed_form(power_model, small_dims, rng):
    F = crandn(rng, 4, 4)
    n_t, n_r = 16, 4
    pm = power_model
    circuit_gap = (
        n_t * (pm.p_trfc + pm.p_dac + pm.p_pa) + n_t * (pm.p_rrfc + pm.p_adc + pm.p_lna)
    ) - (
        n_r * (pm.p_trfc + pm.p_dac) + n_t * (pm.p_pa + pm.p_ps)
        + n_r * (pm.p_rrfc + pm.p_adc) + n_t * (pm.p_lna + pm.p_ps)
    )
    signal_gap = pm.eta * (1 - small_dims.power_scale) * np.linalg.norm(F) ** 2
    gap = digital_power(F, small_dims, pm) - hybrid_power(F, small_dims, pm)
    assert gap == pytest.approx(circuit_gap + signal_gap, rel=1e-12)


def test_consumed_power_dispatch(small_dims, power_model):
    F = np.eye(4)
    assert consumed_power(F, small_dims, power_model, "hybrid") == hybrid_power(F, small_dims, power_model)
    assert consumed_power(F, small_dims, power_model, Architecture.FULLY_DIGITAL) == digital_power(
        F, small_dims, power_model
    )


def test_power_model_validation():
    with pytest.raises(ValidationError):
        PowerModel(eta=0.5)
    with pytest.raises(ValidationError):
        PowerModel(p_pa=-1.0)


def test_energy_efficiency_ratio():
    m = Metrics.build(rate_bits=12.0, consumed_power=4.0, transmit_power=0.1, noise_power=0.001)
    assert m.energy_efficiency == 3.0
    assert m.to_dict()["rate_bits"] == 12.0
    with pytest.raises(InvalidArgumentError):
        energy_efficiency(1.0, 0.0)


def test_spectral_efficiency_zero_precoder(rng):
    H = crandn(rng, 4, 4)
    assert spectral_efficiency(H, np.zeros((4, 4)), None, np.eye(4)) == 0.0


def test_spectral_efficiency_determinant_forms_agree(rng):
    H = crandn(rng, 5, 5)
    F = crandn(rng, 5, 3)
    A = crandn(rng, 5, 5)
    R = A @ A.conj().T + np.eye(5)
    rate_a = spectral_efficiency(H, F, None, R)
    HF = H @ F
    rate_b = np.linalg.slogdet(np.eye(3) + HF.conj().T @ np.linalg.solve(R, HF))[1] / np.log(2)
    assert rate_a == pytest.approx(rate_b, rel=1e-9)


def test_spectral_efficiency_scalar():
    h, f, g, noise = 2.0 + 1.0j, 0.5, 1.0 - 1.0j, 0.1
    expected = np.log2(1 + abs(g * h * f) ** 2 / (abs(g) ** 2 * noise))
    rate = spectral_efficiency(np.array([[h]]), np.array([[f]]), np.array([[g]]), np.array([[noise]]))
    assert rate == pytest.approx(expected, rel=1e-12)


def test_spectral_efficiency_singular_noise(rng):
    with pytest.raises(SingularMatrixError):
        spectral_efficiency(crandn(rng, 2, 2), np.eye(2), None, np.zeros((2, 2)))
