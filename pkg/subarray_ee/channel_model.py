"""
Clustered (Saleh-Valenzuela style) narrowband mmWave channel generator.

Both ends use uniform linear arrays with ``N_t = N_r * N_RF`` elements, and
the resulting ``N_t x N_t`` matrix is viewed as an ``N_r x N_r`` grid of
``N_RF x N_RF`` blocks, one per (receive sub-array, transmit sub-array) pair.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)


# --- Configuration models ---


class SystemDims(BaseModel):
    """Sub-array geometry shared by transmitter and receiver."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_subarrays: int = Field(default=8, ge=1)
    antennas_per_subarray: int = Field(default=8, ge=1)
    total_antennas: Optional[int] = None

    @model_validator(mode="after")
    def _check_total(self):
        expected = self.n_subarrays * self.antennas_per_subarray
        if self.total_antennas is None:
            # frozen model: bypass __setattr__
            object.__setattr__(self, "total_antennas", expected)
        elif self.total_antennas != expected:
            raise ValueError(
                f"total_antennas={self.total_antennas} but n_subarrays * "
                f"antennas_per_subarray = {expected}"
            )
        return self

    @property
    def power_scale(self) -> float:
        """``N_RF / N_t``, the squared norm of one analog steering vector."""
        return self.antennas_per_subarray / self.total_antennas


class ClusterConfig(BaseModel):
    """Scattering environment parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_clusters: int = Field(default=8, ge=1)
    rays_per_cluster: int = Field(default=10, ge=1)
    gain_variance: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    angular_spread_deg: float = Field(default=5.0, ge=0, allow_inf_nan=False)
    element_spacing_wavelengths: float = Field(default=0.5, gt=0, allow_inf_nan=False)

    @property
    def n_rays(self) -> int:
        return self.n_clusters * self.rays_per_cluster


# --- Random sources ---


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; every random draw in a trial comes from one of these."""
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_trial_seed(base_seed: int, trial_index: int) -> int:
    """Split ``base_seed`` into an independent 64-bit seed for ``trial_index``."""
    if trial_index < 0:
        raise InvalidArgumentError(f"trial_index must be >= 0, got {trial_index}")
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(trial_index),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# --- Array response ---


def ula_response(angle: float, n_elements: int, spacing: float = 0.5) -> np.ndarray:
    """
    Normalized uniform linear array response.

    Args:
        angle (float): Azimuth in radians.
        n_elements (int): Number of array elements.
        spacing (float): Element spacing in wavelengths.

    Returns:
        np.ndarray: Complex vector of length ``n_elements`` with unit norm.
    """
    if n_elements < 1:
        raise InvalidArgumentError(f"n_elements must be >= 1, got {n_elements}")
    idx = np.arange(n_elements)
    phase = 2.0 * np.pi * spacing * idx * np.sin(angle)
    return np.exp(1j * phase) / np.sqrt(n_elements)


def ula_matrix(angles: np.ndarray, n_elements: int, spacing: float = 0.5) -> np.ndarray:
    """Stack ``ula_response`` for every angle as the columns of a matrix."""
    if n_elements < 1:
        raise InvalidArgumentError(f"n_elements must be >= 1, got {n_elements}")
    angles = np.asarray(angles, dtype=float).reshape(-1)
    idx = np.arange(n_elements)[:, None]
    phase = 2.0 * np.pi * spacing * idx * np.sin(angles)[None, :]
    return np.exp(1j * phase) / np.sqrt(n_elements)


# --- Ray parameters ---


@dataclass(frozen=True)
class PathParams:
    """One propagation ray; angles in radians."""

    gain: complex
    aoa_azimuth: float
    aod_azimuth: float
    aoa_elevation: float
    aod_elevation: float
    cluster: int
    cluster_aoa: float
    cluster_aod: float


@dataclass(frozen=True)
class RayBatch:
    """Vectorized ray parameters, one entry per ray (cluster-major order)."""

    gains: np.ndarray
    aoa_azimuth: np.ndarray
    aod_azimuth: np.ndarray
    aoa_elevation: np.ndarray
    aod_elevation: np.ndarray
    cluster: np.ndarray
    cluster_aoa: np.ndarray
    cluster_aod: np.ndarray

    def __len__(self):
        return len(self.gains)

    def to_paths(self) -> List[PathParams]:
        return [
            PathParams(
                gain=complex(self.gains[i]),
                aoa_azimuth=float(self.aoa_azimuth[i]),
                aod_azimuth=float(self.aod_azimuth[i]),
                aoa_elevation=float(self.aoa_elevation[i]),
                aod_elevation=float(self.aod_elevation[i]),
                cluster=int(self.cluster[i]),
                cluster_aoa=float(self.cluster_aoa[i]),
                cluster_aod=float(self.cluster_aod[i]),
            )
            for i in range(len(self))
        ]

    @classmethod
    def from_paths(cls, paths: List[PathParams]) -> "RayBatch":
        def col(name, dtype=float):
            return np.array([getattr(p, name) for p in paths], dtype=dtype)

        return cls(
            gains=col("gain", complex),
            aoa_azimuth=col("aoa_azimuth"),
            aod_azimuth=col("aod_azimuth"),
            aoa_elevation=col("aoa_elevation"),
            aod_elevation=col("aod_elevation"),
            cluster=col("cluster", int),
            cluster_aoa=col("cluster_aoa"),
            cluster_aod=col("cluster_aod"),
        )


def laplacian_offsets(rng: np.random.Generator, std: float, size) -> np.ndarray:
    """
    Zero-mean Laplacian samples with standard deviation ``std``.

    Inverse-CDF transform with scale ``b = std / sqrt(2)``; no truncation.
    """
    u = rng.random(size) - 0.5
    if std == 0:
        return np.zeros(size)
    b = std / np.sqrt(2.0)
    mag = np.minimum(2.0 * np.abs(u), np.nextafter(1.0, 0.0))
    return -b * np.sign(u) * np.log1p(-mag)


def sample_rays(cluster_cfg: ClusterConfig, rng: np.random.Generator) -> RayBatch:
    """Draw all rays of one channel realization."""
    n_cl = cluster_cfg.n_clusters
    n_ray = cluster_cfg.rays_per_cluster
    spread = np.deg2rad(cluster_cfg.angular_spread_deg)

    mean_aoa = rng.uniform(-np.pi, np.pi, n_cl)
    mean_aod = rng.uniform(-np.pi, np.pi, n_cl)
    mean_el_r = rng.uniform(-np.pi / 2, np.pi / 2, n_cl)
    mean_el_t = rng.uniform(-np.pi / 2, np.pi / 2, n_cl)

    shape = (n_cl, n_ray)
    aoa = mean_aoa[:, None] + laplacian_offsets(rng, spread, shape)
    aod = mean_aod[:, None] + laplacian_offsets(rng, spread, shape)
    el_r = mean_el_r[:, None] + laplacian_offsets(rng, spread, shape)
    el_t = mean_el_t[:, None] + laplacian_offsets(rng, spread, shape)

    sigma = np.sqrt(cluster_cfg.gain_variance / 2.0)
    gains = sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    cluster = np.repeat(np.arange(n_cl), n_ray)
    return RayBatch(
        gains=gains.reshape(-1),
        aoa_azimuth=aoa.reshape(-1),
        aod_azimuth=aod.reshape(-1),
        aoa_elevation=el_r.reshape(-1),
        aod_elevation=el_t.reshape(-1),
        cluster=cluster,
        cluster_aoa=mean_aoa[cluster],
        cluster_aod=mean_aod[cluster],
    )


def sample_path_params(cluster_cfg: ClusterConfig, rng: np.random.Generator) -> List[PathParams]:
    """Draw ``N_cl * N_ray`` rays as a list of PathParams."""
    return sample_rays(cluster_cfg, rng).to_paths()


# --- Channel ---


@dataclass(frozen=True)
class ChannelMatrix:
    """Square ``N_t x N_t`` channel with sub-array block access."""

    entries: np.ndarray
    dims: SystemDims

    def __post_init__(self):
        n = self.dims.total_antennas
        if self.entries.shape != (n, n):
            raise InvalidArgumentError(
                f"channel must be {n}x{n} for {self.dims}, got {self.entries.shape}"
            )

    def block(self, m: int, n: int) -> np.ndarray:
        """``H_{m,n}``: receive sub-array ``m``, transmit sub-array ``n``."""
        n_sub = self.dims.n_subarrays
        if not (0 <= m < n_sub and 0 <= n < n_sub):
            raise InvalidArgumentError(f"block index ({m}, {n}) out of range for {n_sub} sub-arrays")
        s = self.dims.antennas_per_subarray
        return self.entries[m * s:(m + 1) * s, n * s:(n + 1) * s]

    @classmethod
    def from_blocks(cls, blocks, dims: SystemDims) -> "ChannelMatrix":
        return cls(np.block([[np.asarray(b) for b in row] for row in blocks]), dims)

    @classmethod
    def zeros(cls, dims: SystemDims) -> "ChannelMatrix":
        n = dims.total_antennas
        return cls(np.zeros((n, n), dtype=complex), dims)

    def frobenius_norm_sq(self) -> float:
        return float(np.vdot(self.entries, self.entries).real)


def channel_from_rays(dims: SystemDims, rays: RayBatch, spacing: float = 0.5) -> ChannelMatrix:
    """``H = N_t / sqrt(L) * sum_l alpha_l a_r(phi_l^r) a_t(phi_l^t)^H``."""
    n_t = dims.total_antennas
    a_r = ula_matrix(rays.aoa_azimuth, n_t, spacing)
    a_t = ula_matrix(rays.aod_azimuth, n_t, spacing)
    scale = n_t / np.sqrt(len(rays))
    entries = scale * (a_r * rays.gains[None, :]) @ a_t.conj().T
    return ChannelMatrix(entries, dims)


def generate_channel(
    dims: SystemDims, cluster_cfg: ClusterConfig, rng: np.random.Generator
) -> ChannelMatrix:
    """One clustered channel realization; deterministic given the generator state."""
    rays = sample_rays(cluster_cfg, rng)
    channel = channel_from_rays(dims, rays, cluster_cfg.element_spacing_wavelengths)
    logger.debug(
        "channel: %d rays, |H|_F^2=%.4g", len(rays), channel.frobenius_norm_sq()
    )
    return channel
