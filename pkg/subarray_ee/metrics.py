"""
Spectral efficiency, circuit power models and energy efficiency.

All powers are in watts; dBm only appears at the configuration boundary.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg as sla
from pydantic import BaseModel, ConfigDict, Field

from .channel_model import SystemDims
from .errors import InvalidArgumentError, SingularMatrixError

LN2 = np.log(2.0)


class PowerModel(BaseModel):
    """Circuit power constants (watts) and amplifier inefficiency."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    p_pa: float = Field(default=0.020, ge=0)
    p_lna: float = Field(default=0.020, ge=0)
    p_dac: float = Field(default=0.200, ge=0)
    p_adc: float = Field(default=0.200, ge=0)
    p_ps: float = Field(default=0.030, ge=0)
    p_trfc: float = Field(default=0.043, ge=0)
    p_rrfc: float = Field(default=0.043, ge=0)
    p_bb: float = Field(default=0.300, ge=0)
    eta: float = Field(default=1.0, ge=1)

    def hybrid_circuit(self, dims: SystemDims) -> float:
        """``P_T + P_R`` of the sub-connected transceiver pair."""
        p_t = (
            dims.n_subarrays * (self.p_trfc + self.p_dac)
            + dims.total_antennas * (self.p_pa + self.p_ps)
            + self.p_bb
        )
        p_r = (
            dims.n_subarrays * (self.p_rrfc + self.p_adc)
            + dims.total_antennas * (self.p_lna + self.p_ps)
            + self.p_bb
        )
        return p_t + p_r

    def digital_circuit(self, dims: SystemDims) -> float:
        """``P_DT + P_DR`` with one RF chain per antenna."""
        n_t = dims.total_antennas
        p_dt = n_t * (self.p_trfc + self.p_dac + self.p_pa) + self.p_bb
        p_dr = n_t * (self.p_rrfc + self.p_adc + self.p_lna) + self.p_bb
        return p_dt + p_dr


@dataclass(frozen=True)
class Metrics:
    rate_bits: float
    consumed_power: float
    energy_efficiency: float
    transmit_power: float
    noise_power: float

    @classmethod
    def build(cls, rate_bits, consumed_power, transmit_power, noise_power) -> "Metrics":
        return cls(
            rate_bits=float(rate_bits),
            consumed_power=float(consumed_power),
            energy_efficiency=energy_efficiency(rate_bits, consumed_power),
            transmit_power=float(transmit_power),
            noise_power=float(noise_power),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def dbm_to_watts(x: float) -> float:
    if not np.isfinite(x):
        raise InvalidArgumentError(f"dBm value must be finite, got {x}")
    return float(10.0 ** ((x - 30.0) / 10.0))


def watts_to_dbm(watts: float) -> float:
    if not (np.isfinite(watts) and watts > 0):
        raise InvalidArgumentError(f"power must be positive and finite, got {watts}")
    return float(10.0 * np.log10(watts) + 30.0)


def energy_efficiency(rate_bits: float, consumed_power: float) -> float:
    """Bits/Hz per joule."""
    if consumed_power <= 0:
        raise InvalidArgumentError(f"consumed power must be positive, got {consumed_power}")
    return float(rate_bits) / float(consumed_power)


def _frobenius_sq(F: np.ndarray) -> float:
    return float(np.vdot(F, F).real)


def spectral_efficiency(
    channel: np.ndarray,
    F: np.ndarray,
    G: Optional[np.ndarray],
    noise_cov: np.ndarray,
) -> float:
    """
    Achievable rate in bits/s/Hz.

    With a combiner ``G`` this is ``log2|I + R_n^{-1} G^H H F F^H H^H G|`` where
    ``R_n = G^H noise_cov G``. With ``G=None`` it is the combiner-free form
    ``log2|I + noise_cov^{-1} H F F^H H^H|``. Both take either the full channel
    with ``F = F_R F_B`` or the effective channel with ``F_B``.
    """
    HF = np.asarray(channel) @ np.asarray(F)
    if G is None:
        signal = HF @ HF.conj().T
        r_n = np.asarray(noise_cov)
    else:
        G = np.asarray(G)
        GHF = G.conj().T @ HF
        signal = GHF @ GHF.conj().T
        r_n = G.conj().T @ noise_cov @ G
    try:
        M = sla.solve(r_n, signal, assume_a="her")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"noise covariance is singular: {e}") from e
    sign, logdet = np.linalg.slogdet(np.eye(M.shape[0]) + M)
    if sign.real <= 0:
        raise SingularMatrixError("rate determinant is not positive")
    return max(0.0, float(logdet) / LN2)


def hybrid_power(F_B: np.ndarray, dims: SystemDims, pm: PowerModel) -> float:
    """``eta * (N_RF/N_t) * ||F_B||_F^2 + P_T + P_R``."""
    return pm.eta * dims.power_scale * _frobenius_sq(F_B) + pm.hybrid_circuit(dims)


def digital_power(F_B: np.ndarray, dims: SystemDims, pm: PowerModel) -> float:
    """``eta * ||F_B||_F^2 + P_DT + P_DR``."""
    return pm.eta * _frobenius_sq(F_B) + pm.digital_circuit(dims)


class Architecture(str, Enum):
    HYBRID = "hybrid"
    FULLY_DIGITAL = "fully_digital"


def consumed_power(
    F_B: np.ndarray, dims: SystemDims, pm: PowerModel, architecture: Architecture
) -> float:
    if Architecture(architecture) is Architecture.HYBRID:
        return hybrid_power(F_B, dims, pm)
    return digital_power(F_B, dims, pm)
