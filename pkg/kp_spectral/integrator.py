"""Fourth-order exponential time differencing (Cox-Matthews ETDRK4).

Stepping works on the spectral coefficient array of a ``Field``; the
per-mode weights are evaluated once per (grid, params, dt) and reused.
"""
import logging
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Protocol, Sequence

import numpy as np

from .diagnostics import DiagnosticsRecord, StopKind, StopReason
from .errors import ConfigurationError, NumericalOverflowError
from .model import KPParams, ZeroModePolicy, linear_symbol, nonlinear_hat, project_constraint
from .spectral import Field, SpectralGrid

logger = logging.getLogger("kp_spectral.integrator")

CONTOUR_POINTS = 64
CONTOUR_RADIUS = 1.0
DIRECT_THRESHOLD = 0.5

Nonlinearity = Callable[[np.ndarray, SpectralGrid, KPParams], np.ndarray]


def zero_nonlinearity(u_hat: np.ndarray, grid: SpectralGrid, params: KPParams) -> np.ndarray:
    """N = 0: turns every stepper into the exact linear propagator."""
    return np.zeros_like(u_hat)


@dataclass(frozen=True, eq=False)
class EtdCoefficients:
    """Per-mode ETDRK4 weights for a fixed time step."""
    dt: float
    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    grid: Optional[SpectralGrid] = None


@dataclass(frozen=True)
class StepState:
    t: float
    u_hat: Field
    step_index: int = 0


def _phi_weights(z: np.ndarray):
    """Q/dt, f1/dt, f2/dt, f3/dt by their defining formulas (unsafe near z = 0)."""
    ez = np.exp(z)
    z3 = z ** 3
    q = (np.exp(z / 2.0) - 1.0) / z
    f1 = (-4.0 - z + ez * (4.0 - 3.0 * z + z ** 2)) / z3
    f2 = 2.0 * (2.0 + z + ez * (z - 2.0)) / z3
    f3 = (-4.0 - 3.0 * z - z ** 2 + ez * (4.0 - z)) / z3
    return q, f1, f2, f3


def etd_coefficients(L: np.ndarray, dt: float, grid: Optional[SpectralGrid] = None) -> EtdCoefficients:
    """
    ETDRK4 weights for u_hat_t = L u_hat + N(u_hat).

    Modes with |dt L| <= 1/2 average the phi functions over CONTOUR_POINTS
    points on a circle of radius CONTOUR_RADIUS around dt L; the rest use the
    direct formulas.
    """
    if not dt > 0:
        raise ConfigurationError(f"Time step must be positive, got {dt}")
    z = dt * np.asarray(L, dtype=np.complex128)
    small = np.abs(z) <= DIRECT_THRESHOLD

    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        weights = _phi_weights(np.where(small, 1.0, z))

        roots = CONTOUR_RADIUS * np.exp(
            2j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
        zc = z[small][:, None] + roots[None, :]
        contour = [w.mean(axis=1) for w in _phi_weights(zc)]

        E = np.exp(z)
        E2 = np.exp(z / 2.0)

    q, f1, f2, f3 = (w.copy() for w in weights)
    for direct, averaged in zip((q, f1, f2, f3), contour):
        direct[small] = averaged

    coeffs = EtdCoefficients(dt, E, E2, dt * q, dt * f1, dt * f2, dt * f3, grid)
    for name in ("E", "E2", "Q", "f1", "f2", "f3"):
        if not np.all(np.isfinite(getattr(coeffs, name))):
            raise NumericalOverflowError(f"ETD coefficient {name} is not finite for dt={dt}")
    return coeffs


@lru_cache(maxsize=8)
def coefficients_for(grid: SpectralGrid, params: KPParams, dt: float) -> EtdCoefficients:
    """Cached ``etd_coefficients`` for the model's linear symbol."""
    logger.debug(f"Computing ETD coefficients for {grid.key}, {params.name}, dt={dt}")
    return etd_coefficients(linear_symbol(grid, params), dt, grid)


def _finish(s: StepState, new: np.ndarray, coeffs: EtdCoefficients, params: KPParams) -> StepState:
    grid = s.u_hat.grid
    if params.zero_mode_policy is ZeroModePolicy.PROJECT:
        new[grid.xi1 == 0, :] = 0.0
    if not np.all(np.isfinite(new)):
        raise NumericalOverflowError(
            f"Solution became non-finite at step {s.step_index + 1}",
            step_index=s.step_index + 1, t=s.t + coeffs.dt,
        )
    return StepState(s.t + coeffs.dt, Field.from_spectral(grid, new), s.step_index + 1)


def etdrk4_step(
    s: StepState,
    coeffs: EtdCoefficients,
    params: KPParams,
    nonlinear: Nonlinearity = nonlinear_hat,
) -> StepState:
    """
    One Cox-Matthews ETDRK4 step.

    Raises:
        NumericalOverflowError: the new state is not finite (carries step_index)
    """
    grid = s.u_hat.grid
    u = s.u_hat.coefficients()
    E, E2, Q = coeffs.E, coeffs.E2, coeffs.Q
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            Nu = nonlinear(u, grid, params)
            a = E2 * u + Q * Nu
            Na = nonlinear(a, grid, params)
            b = E2 * u + Q * Na
            Nb = nonlinear(b, grid, params)
            c = E2 * a + Q * (2.0 * Nb - Nu)
            Nc = nonlinear(c, grid, params)
            new = E * u + coeffs.f1 * Nu + coeffs.f2 * (Na + Nb) + coeffs.f3 * Nc
    except NumericalOverflowError as e:
        raise NumericalOverflowError(str(e), step_index=s.step_index + 1, t=s.t + coeffs.dt) from e
    return _finish(s, new, coeffs, params)


def ifrk4_step(
    s: StepState,
    coeffs: EtdCoefficients,
    params: KPParams,
    nonlinear: Nonlinearity = nonlinear_hat,
) -> StepState:
    """Integrating-factor RK4 (Lawson) step; comparison scheme sharing E and E2."""
    grid = s.u_hat.grid
    u = s.u_hat.coefficients()
    dt, E, E2 = coeffs.dt, coeffs.E, coeffs.E2
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = nonlinear(u, grid, params)
            k2 = nonlinear(E2 * (u + 0.5 * dt * k1), grid, params)
            k3 = nonlinear(E2 * u + 0.5 * dt * k2, grid, params)
            k4 = nonlinear(E * u + dt * E2 * k3, grid, params)
            new = E * u + dt / 6.0 * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
    except NumericalOverflowError as e:
        raise NumericalOverflowError(str(e), step_index=s.step_index + 1, t=s.t + dt) from e
    return _finish(s, new, coeffs, params)


STEPPERS: Dict[str, Callable[..., StepState]] = {
    "etdrk4": etdrk4_step,
    "ifrk4": ifrk4_step,
}


def get_stepper(name: str) -> Callable[..., StepState]:
    if name not in STEPPERS:
        raise ConfigurationError(f"Unknown stepper: {name}. Supported: {', '.join(STEPPERS.keys())}")
    return STEPPERS[name]


class StepCallback(Protocol):
    """Called with the current state; a record with ``stop`` set halts the run."""

    def __call__(self, state: StepState) -> Optional[DiagnosticsRecord]:
        ...


@dataclass
class Integration:
    """Outcome of ``integrate``."""
    state: StepState
    dt: float
    records: List[DiagnosticsRecord] = field(default_factory=list)
    stop: Optional[StopReason] = None


def integrate(
    u0: Field,
    T: float,
    N_t: int,
    params: KPParams,
    callbacks: Sequence[StepCallback] = (),
    cadence: int = 1,
    stepper: str = "etdrk4",
    nonlinear: Nonlinearity = nonlinear_hat,
    on_step: Optional[Callable[[StepState], None]] = None,
) -> Integration:
    """
    Run N_t uniform steps of size T / N_t from u0.

    Callbacks run at t = 0, every ``cadence`` steps and after the last step.
    A non-finite step ends the run with a ``nonfinite`` stop at the time of
    the last accepted state; a callback record carrying a stop ends it there.
    ``on_step`` sees every accepted state (used for snapshot capture).
    """
    if int(N_t) != N_t or N_t < 1:
        raise ConfigurationError(f"N_t must be a positive integer, got {N_t}")
    if not T > 0:
        raise ConfigurationError(f"T must be positive, got {T}")
    if cadence < 1:
        raise ConfigurationError(f"cadence must be >= 1, got {cadence}")
    N_t = int(N_t)
    dt = T / N_t
    step = get_stepper(stepper)
    grid = u0.grid
    coeffs = coefficients_for(grid, params, dt)

    u_hat = u0 if params.zero_mode_policy is not ZeroModePolicy.PROJECT else project_constraint(u0)
    state = StepState(0.0, Field.from_spectral(grid, u_hat.coefficients()), 0)
    outcome = Integration(state=state, dt=dt)

    def emit(current: StepState) -> Optional[StopReason]:
        for callback in callbacks:
            record = callback(current)
            if record is None:
                continue
            outcome.records.append(record)
            if record.stop is not None:
                return record.stop
        return None

    if on_step is not None:
        on_step(state)
    stop = emit(state)
    start_time = datetime.now()
    report_every = max(1, N_t // 10)
    while stop is None and state.step_index < N_t:
        try:
            state = step(state, coeffs, params, nonlinear)
        except NumericalOverflowError as e:
            logger.warning(f"Overflow at step {e.step_index} (t={e.t:.6g}); last finite state t={state.t:.6g}")
            stop = StopReason(StopKind.NONFINITE, state.t)
            break
        if on_step is not None:
            on_step(state)
        if state.step_index % cadence == 0 or state.step_index == N_t:
            stop = emit(state)
        if state.step_index % report_every == 0:
            elapsed = (datetime.now() - start_time).total_seconds()
            logger.info(f"step {state.step_index}/{N_t} t={state.t:.6g} ({elapsed:.1f}s)")

    if stop is not None:
        logger.info(f"Stopped: {stop.kind.value} at t={stop.t_stop:.6g}")
    outcome.state = state
    outcome.stop = stop
    return outcome
