"""
Baseband precoder/combiner design on the effective channel.

Once the analog stage is fixed, the link reduces to an ``N_r x N_r`` channel
``H~ = G_R^H H F_R`` with noise covariance ``sigma^2 G_R^H G_R``. The inner
loop is a WMMSE block-coordinate ascent (combiner, weight, precoder) on
``-tr(W E) + ln|W| + N - varpi * P_con``; the outer loop is a Dinkelbach
update of ``varpi`` towards the best rate/power ratio. The surrogate is in
nats; reported rates and efficiencies are in bits.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from .analog_stage import AnalogBeamformer, ConvergenceTrace
from .channel_model import ChannelMatrix, SystemDims
from .errors import InvalidArgumentError, NumericFailureError, SingularMatrixError
from .metrics import (
    LN2,
    Architecture,
    Metrics,
    PowerModel,
    consumed_power,
    spectral_efficiency,
)

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4
DEFAULT_MAX_OUTER = 50
DEFAULT_MAX_INNER = 500
BISECTION_TOL = 1e-8
BISECTION_MAX_ITER = 200
EIGEN_FLOOR = 1e-12
# warm-started inner solves resolve chi this much finer than the outer stop
INNER_TOL_FACTOR = 0.1


class Mode(str, Enum):
    ENERGY_EFFICIENCY = "energy_efficiency"
    SPECTRAL_EFFICIENCY = "spectral_efficiency"


@dataclass(frozen=True)
class EffectiveChannel:
    """Baseband view of the link seen by the digital stage."""

    entries: np.ndarray
    noise_cov: np.ndarray
    power_scale: float
    dims: SystemDims
    architecture: Architecture
    noise_power: float

    @property
    def n_streams(self) -> int:
        return self.entries.shape[1]


@dataclass
class DigitalBeamformerSet:
    """Baseband precoder F_B, MMSE combiner G_B, weight W, noise whitener and MSE matrix E."""

    precoder: np.ndarray
    combiner: np.ndarray
    weight: np.ndarray
    whitener: np.ndarray
    mse: np.ndarray


@dataclass
class DinkelbachState:
    """Current ratio ``lambda_ee`` (varpi), last inner chi and the (varpi, chi) history."""

    lambda_ee: float = 0.0
    inner_objective: float = 0.0
    outer_trace: List[Tuple[float, float]] = field(default_factory=list)
    converged: bool = False


@dataclass
class BisectionResult:
    """Multiplier chosen for the power constraint; residual is ``N~ ||F_B||^2 - P``."""

    mu_tilde: float
    constraint_residual: float
    active: bool
    iterations: int = 0
    floor: float = 0.0


class InnerSolution(NamedTuple):
    beamformers: DigitalBeamformerSet
    chi: float
    trace: ConvergenceTrace
    diagnostics: List[str]
    bisection: BisectionResult


class DinkelbachSolution(NamedTuple):
    beamformers: DigitalBeamformerSet
    state: DinkelbachState
    metrics: Metrics
    inner_traces: List[ConvergenceTrace]
    diagnostics: List[str]
    bisection: BisectionResult


def _hermitian(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def _frobenius_sq(F: np.ndarray) -> float:
    return float(np.vdot(F, F).real)


def _solve_her(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    try:
        return sla.solve(_hermitian(A), B, assume_a="her")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"{what} is singular: {e}") from e


# --- Effective channel ---


def effective_channel(
    H: ChannelMatrix, F_R: AnalogBeamformer, G_R: AnalogBeamformer, sigma_n_sq: float
) -> EffectiveChannel:
    """``H~ = G_R^H H F_R``, ``R_n~ = sigma^2 G_R^H G_R``, power scale ``N_RF/N_t``."""
    if F_R.dims != H.dims or G_R.dims != H.dims:
        raise InvalidArgumentError("beamformer dimensions do not match the channel")
    F = F_R.matrix()
    G = G_R.matrix()
    entries = G.conj().T @ H.entries @ F
    noise_cov = _hermitian(sigma_n_sq * (G.conj().T @ G))
    return EffectiveChannel(
        entries=entries,
        noise_cov=noise_cov,
        power_scale=H.dims.power_scale,
        dims=H.dims,
        architecture=Architecture.HYBRID,
        noise_power=float(sigma_n_sq),
    )


def digital_channel(H: ChannelMatrix, sigma_n_sq: float) -> EffectiveChannel:
    """Fully-digital baseline: the full channel with white noise and unit power scale."""
    n = H.dims.total_antennas
    return EffectiveChannel(
        entries=np.array(H.entries, dtype=complex),
        noise_cov=sigma_n_sq * np.eye(n),
        power_scale=1.0,
        dims=H.dims,
        architecture=Architecture.FULLY_DIGITAL,
        noise_power=float(sigma_n_sq),
    )


def whitening(noise_cov: np.ndarray) -> np.ndarray:
    """``R^{-1/2}`` for a positive definite noise covariance."""
    lam, U = sla.eigh(_hermitian(noise_cov))
    if lam.size == 0 or lam.max() <= 0 or lam.min() <= EIGEN_FLOOR * lam.max():
        raise SingularMatrixError(
            f"noise covariance is not positive definite (eigenvalues {lam.min():.3g}..{lam.max():.3g})"
        )
    return _hermitian((U / np.sqrt(lam)) @ U.conj().T)


# --- Block updates ---


def mmse_combiner(eff: EffectiveChannel, F_B: np.ndarray) -> np.ndarray:
    """``G_B = (H~ F F^H H~^H + R_n~)^{-1} H~ F``."""
    HF = eff.entries @ F_B
    A = HF @ HF.conj().T + eff.noise_cov
    return _solve_her(A, HF, "MMSE system matrix")


def mse_matrix(eff: EffectiveChannel, F_B: np.ndarray, G_B: np.ndarray) -> np.ndarray:
    """Error covariance of ``G_B^H y~`` against the transmitted symbols."""
    HF = eff.entries @ F_B
    if G_B.shape[0] != HF.shape[0] or G_B.shape[1] != F_B.shape[1]:
        raise InvalidArgumentError(
            f"combiner shape {G_B.shape} does not match the link ({HF.shape[0]}x{F_B.shape[1]})"
        )
    GHF = G_B.conj().T @ HF
    E = (
        GHF @ GHF.conj().T
        + G_B.conj().T @ eff.noise_cov @ G_B
        - GHF
        - GHF.conj().T
        + np.eye(F_B.shape[1])
    )
    return _hermitian(E)


def mmse_error(eff: EffectiveChannel, F_B: np.ndarray) -> np.ndarray:
    """Closed form ``(I + F^H H~^H R_n~^{-1} H~ F)^{-1}``."""
    HF = eff.entries @ F_B
    A = np.eye(F_B.shape[1]) + HF.conj().T @ _solve_her(eff.noise_cov, HF, "noise covariance")
    return _hermitian(np.linalg.inv(_hermitian(A)))


def weight_update(E_mmse: np.ndarray) -> np.ndarray:
    """
    ``W = E^{-1}``. Eigenvalues below ``EIGEN_FLOOR`` are floored first; a
    non-positive eigenvalue means E is singular.
    """
    lam, U = sla.eigh(_hermitian(E_mmse))
    if lam.min() <= 0:
        raise SingularMatrixError(f"MSE matrix is singular (min eigenvalue {lam.min():.3g})")
    if lam.min() < EIGEN_FLOOR:
        logger.warning("MSE eigenvalue %.3g floored at %.0e", lam.min(), EIGEN_FLOOR)
        lam = np.maximum(lam, EIGEN_FLOOR)
    return _hermitian((U / lam) @ U.conj().T)


def wmmse_surrogate(W: np.ndarray, E: np.ndarray) -> float:
    """``-tr(W E) + ln|W| + N`` in nats."""
    sign, logdet = np.linalg.slogdet(W)
    if sign.real <= 0:
        raise SingularMatrixError("weight matrix is not positive definite")
    return float(-np.trace(W @ E).real + logdet + W.shape[0])


def precoder_update(
    eff: EffectiveChannel, G_B: np.ndarray, W: np.ndarray, mu_tilde: float
) -> np.ndarray:
    """``F_B = (H~^H G W G^H H~ + mu I)^{-1} H~^H G W``."""
    B = eff.entries.conj().T @ G_B @ W
    A = B @ G_B.conj().T @ eff.entries
    return _solve_her(A + mu_tilde * np.eye(A.shape[0]), B, "regularized precoder system")


# --- Power multiplier ---


@dataclass(frozen=True)
class _PowerSpectrum:
    """Eigen-form of the precoder update: ``F(mu) = Omega (Lambda + mu)^{-1} Omega^H B``."""

    lam: np.ndarray
    omega: np.ndarray
    phi: np.ndarray
    rhs: np.ndarray
    power_scale: float

    @classmethod
    def build(cls, eff: EffectiveChannel, G_B: np.ndarray, W: np.ndarray) -> "_PowerSpectrum":
        B = eff.entries.conj().T @ G_B @ W
        A = _hermitian(B @ G_B.conj().T @ eff.entries)
        lam, omega = sla.eigh(A)
        lam = np.maximum(lam, 0.0)
        OB = omega.conj().T @ B
        phi = np.einsum("ij,ij->i", OB, OB.conj()).real
        return cls(lam, omega, phi, B, eff.power_scale)

    def _inverse(self, mu: float) -> np.ndarray:
        d = self.lam + mu
        return np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)

    def power(self, mu: float) -> float:
        inv = self._inverse(mu)
        return float(self.power_scale * np.sum(self.phi * inv ** 2))

    def precoder(self, mu: float) -> np.ndarray:
        """Minimum-norm solution; directions with ``Lambda + mu == 0`` are dropped."""
        inv = self._inverse(mu)
        return self.omega @ (inv[:, None] * (self.omega.conj().T @ self.rhs))


def _bisect(spectrum: _PowerSpectrum, P: float, floor: float, tol: float, max_iter: int) -> BisectionResult:
    p_floor = spectrum.power(floor)
    if p_floor <= P:
        return BisectionResult(floor, p_floor - P, active=False, floor=floor)

    lo = floor
    hi = float(np.sqrt(spectrum.power_scale / P * np.sum(spectrum.phi)))
    p_hi = spectrum.power(hi)
    for it in range(1, max_iter + 1):
        if abs(p_hi - P) <= tol * P:
            return BisectionResult(hi, p_hi - P, active=True, iterations=it, floor=floor)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        p_mid = spectrum.power(mid)
        if p_mid > P:
            lo = mid
        else:
            hi, p_hi = mid, p_mid
    if abs(p_hi - P) <= 1e-6 * P:
        logger.debug("bisection stalled at residual %.3g", (p_hi - P) / P)
        return BisectionResult(hi, p_hi - P, active=True, iterations=max_iter, floor=floor)
    raise NumericFailureError(
        f"power bisection did not converge: residual {(p_hi - P) / P:.3g} after {max_iter} iterations"
    )


def solve_power_multiplier(
    eff: EffectiveChannel,
    G_B: np.ndarray,
    W: np.ndarray,
    P: float,
    floor: float,
    tol: float = BISECTION_TOL,
    max_iter: int = BISECTION_MAX_ITER,
) -> BisectionResult:
    """
    Smallest ``mu_tilde >= floor`` such that ``N~ ||F_B(mu_tilde)||^2 <= P``.

    If the floor already satisfies the budget the constraint is inactive;
    otherwise bisect on ``[floor, sqrt(N~/P * sum diag(Phi))]`` and return the
    feasible end of the final bracket.
    """
    if P <= 0:
        raise InvalidArgumentError(f"power budget must be positive, got {P}")
    if floor < 0:
        raise InvalidArgumentError(f"floor must be >= 0, got {floor}")
    return _bisect(_PowerSpectrum.build(eff, G_B, W), P, floor, tol, max_iter)


# --- Inner and outer loops ---


def initial_precoder(eff: EffectiveChannel, P: float) -> np.ndarray:
    """
    Equal power on the eigenmodes of ``H~^H R_n~^{-1} H~``, strongest first,
    meeting ``N~ tr(F F^H) = P``.
    """
    n = eff.n_streams
    gram = eff.entries.conj().T @ _solve_her(eff.noise_cov, eff.entries, "noise covariance")
    lam, V = sla.eigh(_hermitian(gram))
    V = V[:, np.argsort(lam)[::-1]]
    return np.sqrt(P / (eff.power_scale * n)) * V.astype(complex)


def inner_wmmse(
    eff: EffectiveChannel,
    P: float,
    lambda_ee: float,
    power_model: PowerModel,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_INNER,
    initial: Optional[np.ndarray] = None,
    bisection_tol: float = BISECTION_TOL,
) -> InnerSolution:
    """
    Cycle combiner -> weight -> precoder until the subtractive objective settles.

    The objective after each cycle is
    ``chi = -tr(W E) + ln|W| + N - lambda_ee * P_con`` with E evaluated at the
    current (F_B, G_B); it is non-decreasing across cycles.
    """
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be > 0, got {eps}")
    if P <= 0:
        raise InvalidArgumentError(f"power budget must be positive, got {P}")
    if max_iter < 1:
        raise InvalidArgumentError(f"max_iter must be >= 1, got {max_iter}")

    n = eff.n_streams
    F_B = initial_precoder(eff, P) if initial is None else np.array(initial, dtype=complex)
    W = np.eye(n, dtype=complex)
    G_B = np.zeros((eff.entries.shape[0], n), dtype=complex)
    E = np.eye(n, dtype=complex)
    whitener = whitening(eff.noise_cov)
    floor = lambda_ee * power_model.eta * eff.power_scale
    trace = ConvergenceTrace(threshold=eps, sense="increasing")
    diagnostics: List[str] = []

    chi = -np.inf
    bis = BisectionResult(floor, 0.0, active=False, floor=floor)
    for it in range(max_iter):
        chi_prev = chi
        G_B = mmse_combiner(eff, F_B)
        E_mmse = mse_matrix(eff, F_B, G_B)
        if np.linalg.eigvalsh(E_mmse).min() < EIGEN_FLOOR and "mse_eigen_floor" not in diagnostics:
            diagnostics.append("mse_eigen_floor")
        W = weight_update(E_mmse)

        # F_B from the eigen-form the bisection measured: its power is P + residual
        spectrum = _PowerSpectrum.build(eff, G_B, W)
        bis = _bisect(spectrum, P, floor, bisection_tol, BISECTION_MAX_ITER)
        F_B = spectrum.precoder(bis.mu_tilde)

        E = mse_matrix(eff, F_B, G_B)
        p_con = consumed_power(F_B, eff.dims, power_model, eff.architecture)
        chi = wmmse_surrogate(W, E) - lambda_ee * p_con
        trace.values.append(chi)
        logger.debug(
            "inner %d: chi=%.8g mu=%.4g active=%s", it, chi, bis.mu_tilde, bis.active
        )
        if abs(chi - chi_prev) <= eps:
            break
    else:
        trace.capped = True
        diagnostics.append("inner_cap")
        logger.warning("WMMSE inner loop hit the iteration cap (%d)", max_iter)

    beamformers = DigitalBeamformerSet(
        precoder=F_B, combiner=G_B, weight=W, whitener=whitener, mse=E
    )
    return InnerSolution(beamformers, chi, trace, diagnostics, bis)


def link_metrics(eff: EffectiveChannel, F_B: np.ndarray, power_model: PowerModel) -> Metrics:
    """Rate (bits/s/Hz), consumed power and transmit power of a precoder on this link."""
    rate = spectral_efficiency(eff.entries, F_B, None, eff.noise_cov)
    return Metrics.build(
        rate_bits=rate,
        consumed_power=consumed_power(F_B, eff.dims, power_model, eff.architecture),
        transmit_power=eff.power_scale * _frobenius_sq(F_B),
        noise_power=eff.noise_power,
    )


def dinkelbach_solve(
    eff: EffectiveChannel,
    P: float,
    power_model: PowerModel,
    eps: float = DEFAULT_EPS,
    mode: Mode = Mode.ENERGY_EFFICIENCY,
    max_outer: int = DEFAULT_MAX_OUTER,
    max_inner: int = DEFAULT_MAX_INNER,
    bisection_tol: float = BISECTION_TOL,
) -> DinkelbachSolution:
    """
    Maximize rate / consumed power on the effective channel.

    Starts at ``lambda_ee = 0``; after each inner solve, stops if ``|chi| <= eps``
    and otherwise sets ``lambda_ee`` to surrogate / P_con. Outer iterations
    after the first warm-start from the previous precoder and run the inner
    loop to ``eps * INNER_TOL_FACTOR``. If ``lambda_ee`` stops increasing the
    loop ends with ``dinkelbach_stall``. In spectral-efficiency mode the inner
    loop runs once with ``lambda_ee = 0``.
    """
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be > 0, got {eps}")
    if max_outer < 1:
        raise InvalidArgumentError(f"max_outer must be >= 1, got {max_outer}")
    mode = Mode(mode)
    state = DinkelbachState()
    inner_traces: List[ConvergenceTrace] = []
    diagnostics: List[str] = []

    if mode is Mode.SPECTRAL_EFFICIENCY:
        inner = inner_wmmse(eff, P, 0.0, power_model, eps, max_inner, bisection_tol=bisection_tol)
        inner_traces.append(inner.trace)
        diagnostics.extend(inner.diagnostics)
        state.inner_objective = inner.chi
        state.converged = not inner.trace.capped
        beamformers = inner.beamformers
    else:
        warm = None
        beamformers = None
        for outer in range(max_outer):
            inner_eps = eps if warm is None else eps * INNER_TOL_FACTOR
            inner = inner_wmmse(
                eff, P, state.lambda_ee, power_model, inner_eps, max_inner,
                initial=warm, bisection_tol=bisection_tol,
            )
            inner_traces.append(inner.trace)
            for d in inner.diagnostics:
                if d not in diagnostics:
                    diagnostics.append(d)
            beamformers = inner.beamformers
            state.inner_objective = inner.chi
            state.outer_trace.append((state.lambda_ee, inner.chi))
            logger.debug("outer %d: varpi=%.8g chi=%.4g", outer, state.lambda_ee, inner.chi)
            if abs(inner.chi) <= eps:
                state.converged = True
                break
            F_B = beamformers.precoder
            p_con = consumed_power(F_B, eff.dims, power_model, eff.architecture)
            lambda_next = wmmse_surrogate(beamformers.weight, beamformers.mse) / p_con
            if outer > 0 and lambda_next <= state.lambda_ee:
                diagnostics.append("dinkelbach_stall")
                logger.warning(
                    "Dinkelbach ratio stopped increasing at %.8g (chi=%.3g)", state.lambda_ee, inner.chi
                )
                break
            state.lambda_ee = lambda_next
            warm = F_B
        else:
            diagnostics.append("dinkelbach_cap")
            logger.warning("Dinkelbach loop hit the outer cap (%d)", max_outer)

    metrics = link_metrics(eff, beamformers.precoder, power_model)
    return DinkelbachSolution(beamformers, state, metrics, inner_traces, diagnostics, inner.bisection)


def fully_digital_solve(
    H: ChannelMatrix,
    P: float,
    power_model: PowerModel,
    noise_power: float,
    eps: float = DEFAULT_EPS,
    mode: Mode = Mode.ENERGY_EFFICIENCY,
    max_outer: int = DEFAULT_MAX_OUTER,
    max_inner: int = DEFAULT_MAX_INNER,
    bisection_tol: float = BISECTION_TOL,
) -> DinkelbachSolution:
    """Same solver on the full channel with one RF chain per antenna."""
    return dinkelbach_solve(
        digital_channel(H, noise_power), P, power_model, eps, mode,
        max_outer, max_inner, bisection_tol,
    )


def energy_efficiency_nats(metrics: Metrics) -> float:
    """Nats/Hz per joule counterpart of ``metrics.energy_efficiency``."""
    return metrics.energy_efficiency * LN2
