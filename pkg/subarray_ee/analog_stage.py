"""
Analog phase-shifter design by interference-leakage minimization.

Each sub-array's steering vector is updated one element at a time with a
closed-form phase that minimizes the leakage quadratic form, alternating
between the receive side (transmit side fixed) and the transmit side
(receive side fixed) until the total leakage stops decreasing.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import block_diag

from .channel_model import ChannelMatrix, SystemDims
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4
DEFAULT_MAX_OUTER = 100
DEFAULT_MAX_SWEEPS = 100


class Side(str, Enum):
    TRANSMIT = "transmit"
    RECEIVE = "receive"


@dataclass(frozen=True)
class AnalogBeamformer:
    """
    Block-diagonal constant-modulus phase-shifter bank.

    Row ``k`` of ``phases`` holds the ``N_RF`` phases of sub-array ``k``; the
    materialized matrix has ``f_k = exp(j * phases[k]) / sqrt(N_t)`` in block
    ``k`` of column ``k`` and zeros elsewhere.
    """

    phases: np.ndarray
    dims: SystemDims
    side: Side

    def __post_init__(self):
        expected = (self.dims.n_subarrays, self.dims.antennas_per_subarray)
        if self.phases.shape != expected:
            raise InvalidArgumentError(
                f"phases must have shape {expected}, got {self.phases.shape}"
            )

    @classmethod
    def random(cls, dims: SystemDims, side: Side, rng: np.random.Generator) -> "AnalogBeamformer":
        phases = rng.uniform(0.0, 2.0 * np.pi, (dims.n_subarrays, dims.antennas_per_subarray))
        return cls(phases, dims, Side(side))

    @classmethod
    def zeros(cls, dims: SystemDims, side: Side) -> "AnalogBeamformer":
        return cls(np.zeros((dims.n_subarrays, dims.antennas_per_subarray)), dims, Side(side))

    @property
    def modulus(self) -> float:
        return 1.0 / np.sqrt(self.dims.total_antennas)

    def vector(self, k: int) -> np.ndarray:
        _check_index(k, self.dims.n_subarrays, "sub-array")
        return self.modulus * np.exp(1j * self.phases[k])

    def with_vector(self, k: int, v: np.ndarray) -> "AnalogBeamformer":
        _check_index(k, self.dims.n_subarrays, "sub-array")
        phases = self.phases.copy()
        phases[k] = np.angle(v)
        return replace(self, phases=phases)

    def matrix(self) -> np.ndarray:
        """``N_t x N_r`` block-diagonal matrix (F_R or G_R)."""
        cols = [self.vector(k)[:, None] for k in range(self.dims.n_subarrays)]
        return block_diag(*cols)


@dataclass
class LeakageReport:
    """Per-receiver (forward) and per-transmitter (backward) leakage; both sum to ``total``."""

    forward_per_subarray: np.ndarray
    backward_per_subarray: np.ndarray
    total: float


@dataclass
class ConvergenceTrace:
    """Objective values recorded once per sweep or outer iteration."""

    values: List[float] = field(default_factory=list)
    threshold: float = DEFAULT_EPS
    sense: str = "decreasing"
    capped: bool = False

    @property
    def iterations(self) -> int:
        return len(self.values)

    def is_monotone(self, slack: float = 1e-9) -> bool:
        diffs = np.diff(np.asarray(self.values, dtype=float))
        if self.sense == "decreasing":
            return bool(np.all(diffs <= slack))
        return bool(np.all(diffs >= -slack))

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "threshold": self.threshold,
            "sense": self.sense,
            "capped": self.capped,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceTrace":
        return cls(
            values=list(data["values"]),
            threshold=data["threshold"],
            sense=data["sense"],
            capped=data["capped"],
        )


class SubarrayTrace(NamedTuple):
    outer_iteration: int
    side: Side
    subarray: int
    trace: ConvergenceTrace


class AnalogSolution(NamedTuple):
    transmit: AnalogBeamformer
    receive: AnalogBeamformer
    trace: ConvergenceTrace
    subarray_traces: List[SubarrayTrace]
    initial_total: float = 0.0

    def settled_fraction(self, iterations: int) -> float:
        """
        Share of the total leakage reduction still outstanding after
        ``iterations`` outer iterations; 0 once the run has stopped.
        """
        values = self.trace.values
        if len(values) <= iterations:
            return 0.0
        reduction = self.initial_total - values[-1]
        if reduction <= 0:
            return 0.0
        return float((values[iterations - 1] - values[-1]) / reduction)


def _check_index(k: int, n: int, what: str):
    if not 0 <= k < n:
        raise InvalidArgumentError(f"{what} index {k} out of range [0, {n})")


def _quadratic(v: np.ndarray, M: np.ndarray) -> float:
    return float(np.vdot(v, M @ v).real)


def leakage_matrix(
    side: Side, k: int, H: ChannelMatrix, other_side: AnalogBeamformer
) -> np.ndarray:
    """
    Interference covariance seen by sub-array ``k`` on ``side``.

    Receive side: ``sum_{j != k} H_{k,j} f_j f_j^H H_{k,j}^H`` (other_side = F_R).
    Transmit side: ``sum_{j != k} H_{j,k}^H g_j g_j^H H_{j,k}`` (other_side = G_R).
    """
    side = Side(side)
    n_sub = H.dims.n_subarrays
    _check_index(k, n_sub, "sub-array")
    n_rf = H.dims.antennas_per_subarray
    M = np.zeros((n_rf, n_rf), dtype=complex)
    for j in range(n_sub):
        if j == k:
            continue
        if side is Side.RECEIVE:
            u = H.block(k, j) @ other_side.vector(j)
        else:
            u = H.block(j, k).conj().T @ other_side.vector(j)
        M += np.outer(u, u.conj())
    return 0.5 * (M + M.conj().T)


def phase_element_update(
    v: np.ndarray, M: np.ndarray, l: int, modulus: Optional[float] = None
) -> complex:
    """
    Closed-form minimizer of ``v^H M v`` over the phase of ``v[l]``.

    The cross term is ``2 Re{conj(v[l]) c}`` with ``c = sum_{i != l} M[l, i] v[i]``,
    so the best phase is ``arg(c) - pi``. ``arg(0)`` is taken as 0.

    Args:
        v (np.ndarray): Current steering vector.
        M (np.ndarray): Hermitian PSD leakage matrix.
        l (int): Element index.
        modulus (float, optional): Entry modulus; defaults to ``|v[l]|``.

    Returns:
        complex: The new value for ``v[l]``; ``v`` itself is not modified.
    """
    _check_index(l, len(v), "element")
    if modulus is None:
        modulus = abs(v[l])
    c = M[l, :] @ v - M[l, l] * v[l]
    return modulus * np.exp(1j * (np.angle(c) - np.pi))


def optimize_subarray(
    side: Side,
    k: int,
    H: ChannelMatrix,
    other_side: AnalogBeamformer,
    initial: np.ndarray,
    eps: float = DEFAULT_EPS,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> Tuple[np.ndarray, ConvergenceTrace]:
    """Sweep the element updates of one sub-array until the leakage settles."""
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be > 0, got {eps}")
    trace = ConvergenceTrace(threshold=eps, sense="decreasing")
    v = np.array(initial, dtype=complex)
    if H.dims.n_subarrays == 1:
        trace.values.append(0.0)
        return v, trace

    M = leakage_matrix(side, k, H, other_side)
    modulus = 1.0 / np.sqrt(H.dims.total_antennas)
    previous = 0.0
    for _ in range(max_sweeps):
        for l in range(len(v)):
            v[l] = phase_element_update(v, M, l, modulus)
        current = _quadratic(v, M)
        trace.values.append(current)
        if abs(current - previous) <= eps:
            break
        previous = current
    else:
        trace.capped = True
        logger.warning("%s sub-array %d hit the sweep cap (%d)", Side(side).value, k, max_sweeps)
    return v, trace


def total_interference(
    H: ChannelMatrix, F_R: AnalogBeamformer, G_R: AnalogBeamformer
) -> LeakageReport:
    """Forward and backward leakage per sub-array; both sums equal the total."""
    if F_R.dims != H.dims or G_R.dims != H.dims:
        raise InvalidArgumentError("beamformer dimensions do not match the channel")
    n_sub = H.dims.n_subarrays
    forward = np.array(
        [_quadratic(G_R.vector(k), leakage_matrix(Side.RECEIVE, k, H, F_R)) for k in range(n_sub)]
    )
    backward = np.array(
        [_quadratic(F_R.vector(k), leakage_matrix(Side.TRANSMIT, k, H, G_R)) for k in range(n_sub)]
    )
    return LeakageReport(forward, backward, float(forward.sum()))


def alternate_analog(
    H: ChannelMatrix,
    rng: np.random.Generator,
    eps: float = DEFAULT_EPS,
    max_outer: int = DEFAULT_MAX_OUTER,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> AnalogSolution:
    """
    Alternate receive and transmit passes until ``I_Total`` settles.

    Transmit phases start uniform on [0, 2*pi) from ``rng``; receive phases
    start at zero. Sub-arrays of one side are updated in index order; they
    are independent given the other side.
    """
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be > 0, got {eps}")
    if max_outer < 1:
        raise InvalidArgumentError(f"max_outer must be >= 1, got {max_outer}")

    dims = H.dims
    F_R = AnalogBeamformer.random(dims, Side.TRANSMIT, rng)
    G_R = AnalogBeamformer.zeros(dims, Side.RECEIVE)
    trace = ConvergenceTrace(threshold=eps, sense="decreasing")
    subarray_traces: List[SubarrayTrace] = []

    if dims.n_subarrays == 1:
        trace.values.append(0.0)
        return AnalogSolution(F_R, G_R, trace, subarray_traces, 0.0)

    initial_total = previous = total_interference(H, F_R, G_R).total
    for outer in range(max_outer):
        for k in range(dims.n_subarrays):
            g_k, sub = optimize_subarray(
                Side.RECEIVE, k, H, F_R, G_R.vector(k), eps, max_sweeps
            )
            G_R = G_R.with_vector(k, g_k)
            subarray_traces.append(SubarrayTrace(outer, Side.RECEIVE, k, sub))
        for k in range(dims.n_subarrays):
            f_k, sub = optimize_subarray(
                Side.TRANSMIT, k, H, G_R, F_R.vector(k), eps, max_sweeps
            )
            F_R = F_R.with_vector(k, f_k)
            subarray_traces.append(SubarrayTrace(outer, Side.TRANSMIT, k, sub))

        current = total_interference(H, F_R, G_R).total
        trace.values.append(current)
        logger.debug("analog outer %d: I_total=%.6g", outer, current)
        if abs(current - previous) <= eps:
            break
        previous = current
    else:
        trace.capped = True
        logger.warning("analog alternation hit the outer cap (%d)", max_outer)

    return AnalogSolution(F_R, G_R, trace, subarray_traces, initial_total)
