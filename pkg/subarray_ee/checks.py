"""
Invariant suite run by ``simulate.py check``.

Each ``check_*`` method returns ``{"passed": bool, "cases": int, "worst": float}``
where ``worst`` is the largest violation metric seen (0 when exact).
"""

import json
import logging
import os
from datetime import datetime
from typing import Iterable, Optional

import numpy as np

from .analog_stage import (
    AnalogBeamformer,
    Side,
    alternate_analog,
    phase_element_update,
    total_interference,
)
from .channel_model import SystemDims, derive_trial_seed, generate_channel, make_rng
from .config import ExperimentConfig
from .digital_stage import (
    Mode,
    dinkelbach_solve,
    effective_channel,
    mmse_error,
)
from .errors import OutputError
from .metrics import LN2, PowerModel, dbm_to_watts, spectral_efficiency

logger = logging.getLogger(__name__)

GRID_POINTS = 4096
MONOTONE_SLACK = 1e-9


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _random_psd(rng, n, rank=None):
    A = _crandn(rng, n, rank or n)
    return A @ A.conj().T


def _result(passed, cases, worst, **extra):
    out = {"passed": bool(passed), "cases": int(cases), "worst": float(worst)}
    out.update(extra)
    return out


class InvariantChecker:
    def __init__(
        self,
        cfg: ExperimentConfig,
        seeds: Optional[Iterable[int]] = None,
        random_instances: int = 1000,
        power_dbm: float = 10.0,
    ):
        self.cfg = cfg
        self.seeds = list(range(100) if seeds is None else seeds)
        self.random_instances = random_instances
        self.power_dbm = power_dbm
        self.results = {}
        self._solutions = None

    def _rng(self, offset: int):
        return make_rng(derive_trial_seed(self.cfg.base_seed, 10**6 + offset))

    def _trial(self, index: int):
        rng = make_rng(derive_trial_seed(self.cfg.base_seed, index))
        H = generate_channel(self.cfg.dims, self.cfg.cluster, rng)
        analog = alternate_analog(
            H, rng, self.cfg.eps, self.cfg.max_outer_analog, self.cfg.max_sweeps
        )
        return H, analog

    def _seeded_solutions(self):
        """Analog + EE solution per seed, computed once and shared by several checks."""
        if self._solutions is None:
            noise = dbm_to_watts(self.cfg.noise_dbm)
            P = dbm_to_watts(self.power_dbm)
            self._solutions = []
            for index in self.seeds:
                H, analog = self._trial(index)
                eff = effective_channel(H, analog.transmit, analog.receive, noise)
                sol = dinkelbach_solve(
                    eff, P, self.cfg.power_model, self.cfg.eps, Mode.ENERGY_EFFICIENCY,
                    self.cfg.max_outer_dinkelbach, self.cfg.max_inner, self.cfg.bisection_tol,
                )
                self._solutions.append((H, analog, eff, sol))
        return self._solutions

    def check_leakage_identity(self):
        """Forward and backward leakage totals agree for random phases."""
        rng = self._rng(1)
        dims = self.cfg.dims
        worst = 0.0
        for _ in range(self.random_instances):
            H = generate_channel(dims, self.cfg.cluster, rng)
            F_R = AnalogBeamformer.random(dims, Side.TRANSMIT, rng)
            G_R = AnalogBeamformer.random(dims, Side.RECEIVE, rng)
            rep = total_interference(H, F_R, G_R)
            fwd, bwd = rep.forward_per_subarray.sum(), rep.backward_per_subarray.sum()
            worst = max(worst, abs(fwd - bwd) / max(abs(fwd), 1e-300))
        return _result(worst <= 1e-9, self.random_instances, worst)

    def check_analog_monotone(self):
        """Non-increasing traces; the alternation is uncapped and within 1% of its final leakage after 10 passes."""
        worst = 0.0
        outstanding = 0.0
        max_iterations = 0
        capped = False
        for _, analog, _, _ in self._seeded_solutions():
            traces = [analog.trace] + [s.trace for s in analog.subarray_traces]
            for t in traces:
                if len(t.values) > 1:
                    worst = max(worst, float(np.max(np.diff(t.values))))
            max_iterations = max(max_iterations, analog.trace.iterations)
            outstanding = max(outstanding, analog.settled_fraction(10))
            capped = capped or analog.trace.capped
        return _result(
            worst <= MONOTONE_SLACK and outstanding <= 0.01 and not capped,
            len(self.seeds),
            max(worst, 0.0),
            max_outer_iterations=max_iterations,
            outstanding_after_10=outstanding,
        )

    def check_phase_update_grid(self):
        """Closed-form phase against a dense grid search, for sub-arrays of at most 4 elements."""
        rng = self._rng(2)
        grid = np.exp(1j * 2.0 * np.pi * np.arange(GRID_POINTS) / GRID_POINTS)
        half_step = np.pi / GRID_POINTS
        worst = 0.0
        passed = True
        for _ in range(self.random_instances):
            n = int(rng.integers(2, 5))
            M = _random_psd(rng, n)
            modulus = 1.0 / np.sqrt(n)
            v = modulus * np.exp(1j * rng.uniform(0, 2 * np.pi, n))
            l = int(rng.integers(0, n))

            closed = v.copy()
            closed[l] = phase_element_update(v, M, l, modulus)
            f_closed = np.vdot(closed, M @ closed).real

            V = np.repeat(v[:, None], GRID_POINTS, axis=1)
            V[l, :] = modulus * grid
            f_grid = np.einsum("ik,ij,jk->k", V.conj(), M, V).real.min()

            c = M[l, :] @ v - M[l, l] * v[l]
            resolution = 2.0 * modulus * abs(c) * (1.0 - np.cos(half_step))
            scale = max(np.abs(M).max(), 1e-300)
            excess = (f_closed - f_grid) / scale
            if excess > 1e-12 or (f_grid - f_closed) > resolution + 1e-12 * scale:
                passed = False
            worst = max(worst, excess)
        return _result(passed, self.random_instances, max(worst, 0.0))

    def check_digital_monotone(self):
        """Inner chi non-decreasing, varpi non-decreasing, terminal |chi| <= eps, short cold-start inner loop."""
        worst = 0.0
        terminal = 0.0
        max_inner = 0
        converged = True
        for _, _, _, sol in self._seeded_solutions():
            for t in sol.inner_traces:
                if len(t.values) > 1:
                    worst = max(worst, float(-np.min(np.diff(t.values))))
                converged = converged and not t.capped
            max_inner = max(max_inner, sol.inner_traces[0].iterations)
            varpi = [p[0] for p in sol.state.outer_trace]
            if len(varpi) > 1:
                worst = max(worst, float(-np.min(np.diff(varpi))))
            terminal = max(terminal, abs(sol.state.inner_objective))
            converged = converged and sol.state.converged
        return _result(
            converged and worst <= MONOTONE_SLACK and terminal <= self.cfg.eps and max_inner <= 20,
            len(self.seeds),
            max(worst, 0.0),
            max_inner_iterations=max_inner,
            terminal_chi=terminal,
        )

    def check_rate_mse_duality(self):
        """Rate from the MSE matrix, from either determinant form, and from the full channel."""
        rng = self._rng(3)
        dims = self.cfg.dims
        noise = dbm_to_watts(self.cfg.noise_dbm)
        worst = 0.0
        for _ in range(self.random_instances):
            H = generate_channel(dims, self.cfg.cluster, rng)
            F_R = AnalogBeamformer.random(dims, Side.TRANSMIT, rng)
            G_R = AnalogBeamformer.random(dims, Side.RECEIVE, rng)
            eff = effective_channel(H, F_R, G_R, noise)
            F_B = _crandn(rng, dims.n_subarrays, dims.n_subarrays)

            rate_a = spectral_efficiency(eff.entries, F_B, None, eff.noise_cov)
            HF = eff.entries @ F_B
            inner = np.eye(F_B.shape[1]) + HF.conj().T @ np.linalg.solve(eff.noise_cov, HF)
            rate_b = np.linalg.slogdet(inner)[1] / LN2
            rate_mse = -np.linalg.slogdet(mmse_error(eff, F_B))[1] / LN2
            rate_full = spectral_efficiency(
                H.entries, F_R.matrix() @ F_B, G_R.matrix(), noise * np.eye(dims.total_antennas)
            )
            ref = max(abs(rate_b), 1e-300)
            worst = max(
                worst,
                abs(rate_a - rate_b) / ref,
                abs(rate_mse - rate_b) / ref,
                abs(rate_full - rate_b) / ref,
            )
        return _result(worst <= 1e-9, self.random_instances, worst)

    def check_power_feasibility(self):
        """Budget met by the returned precoder; KKT slackness against the multiplier actually used."""
        P = dbm_to_watts(self.power_dbm)
        worst = 0.0
        for _, _, eff, sol in self._seeded_solutions():
            F_B = sol.beamformers.precoder
            used = eff.power_scale * np.vdot(F_B, F_B).real
            worst = max(worst, (used - P) / P)
            bis = sol.bisection
            floor = bis.floor
            worst = max(worst, (floor - bis.mu_tilde) / max(floor, 1.0))
            if bis.active:
                worst = max(worst, abs(used - P) / P, abs(bis.constraint_residual) / P)
            else:
                worst = max(worst, abs(bis.mu_tilde - floor) / max(floor, 1.0))
        return _result(worst <= 1e-6, len(self.seeds), max(worst, 0.0))

    def check_structural_identities(self):
        rng = self._rng(4)
        worst = 0.0
        cases = 0
        for _, analog, _, sol in self._seeded_solutions():
            for bf in (analog.transmit, analog.receive):
                M = bf.matrix()
                scale = bf.dims.power_scale
                worst = max(worst, np.abs(M.conj().T @ M - scale * np.eye(M.shape[1])).max())
                F_B = sol.beamformers.precoder
                lhs = np.linalg.norm(M @ F_B) ** 2
                rhs = scale * np.linalg.norm(F_B) ** 2
                worst = max(worst, abs(lhs - rhs) / max(rhs, 1.0))
                F_rand = _crandn(rng, *F_B.shape)
                lhs = np.linalg.norm(M @ F_rand) ** 2
                rhs = scale * np.linalg.norm(F_rand) ** 2
                worst = max(worst, abs(lhs - rhs) / rhs)
                cases += 1
        return _result(worst <= 1e-12, cases, worst)

    def check_circuit_arithmetic(self):
        pm = PowerModel()
        dims = SystemDims(n_subarrays=4, antennas_per_subarray=4)
        errors = [abs(pm.hybrid_circuit(dims) - 4.144), abs(pm.digital_circuit(dims) - 9.016)]
        return _result(max(errors) <= 1e-12, 2, max(errors))

    def check_channel_normalization(self, draws: int = 10_000):
        """Mean ``||H||_F^2`` over many draws is ``N_t^2`` within 2%."""
        rng = self._rng(5)
        n_t = self.cfg.dims.total_antennas
        norms = [
            generate_channel(self.cfg.dims, self.cfg.cluster, rng).frobenius_norm_sq()
            for _ in range(draws)
        ]
        rel = abs(np.mean(norms) / n_t**2 - 1.0)
        return _result(rel <= 0.02, draws, rel)

    def run_all(self, include_channel_normalization: bool = False):
        checks = {
            "leakage_identity": self.check_leakage_identity,
            "analog_monotone": self.check_analog_monotone,
            "phase_update_grid": self.check_phase_update_grid,
            "digital_monotone": self.check_digital_monotone,
            "rate_mse_duality": self.check_rate_mse_duality,
            "power_feasibility": self.check_power_feasibility,
            "structural_identities": self.check_structural_identities,
            "circuit_arithmetic": self.check_circuit_arithmetic,
        }
        if include_channel_normalization:
            checks["channel_normalization"] = self.check_channel_normalization
        for name, check in checks.items():
            logger.info("running %s", name)
            self.results[name] = check()
        return {
            "timestamp": datetime.now().strftime("%Y%m%d_%H%M%S"),
            "config_hash": self.cfg.config_hash(),
            "seeds": len(self.seeds),
            "passed": all(r["passed"] for r in self.results.values()),
            "checks": self.results,
        }


def save_report(report: dict, out_dir) -> str:
    """Write ``invariants_<timestamp>.json`` under ``out_dir``."""
    path = os.path.join(out_dir, f"invariants_{report['timestamp']}.json")
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "w") as f:
            json.dump(report, f, indent=2)
    except OSError as e:
        raise OutputError(f"could not write {path}: {e}") from e
    return path
