"""Switched trajectory integration and empirical absorption checking.

Trajectories are integrated with the classical 4th-order Runge-Kutta method
on a fixed grid; switch times are snapped to the grid, which keeps runs
deterministic and makes segment concatenation exact.  A divergence guard at
state norm 1e12 separates falsification evidence from numerical failure.
The adversarial signal greedily maximises the worst-case derivative of a
given function V at each grid point; it is evidence of instability, never
proof, and never accepts a certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .certify import AbsorbingSetCertificate, SwitchedSystem
from .poly import (Polynomial, PolynomialVectorField, evaluate_exponent_form,
                   lie_derivative)

DIVERGENCE_GUARD = 1e12
RE_EXIT_TOLERANCE = 1e-3


class CertificateContradictionError(RuntimeError):
    """A trajectory diverged under a verified certificate."""


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant index schedule on [0, horizon].

    ``switches`` holds (time, index) pairs with strictly increasing times,
    starting at time 0.0 with the initial index; indices are 1-based.
    """

    horizon: float
    switches: tuple

    def __post_init__(self):
        sw = tuple((float(t), int(i)) for t, i in self.switches)
        object.__setattr__(self, "switches", sw)
        if not sw or sw[0][0] != 0.0:
            raise ValueError("signal must start with an index at time 0")
        times = [t for t, _ in sw]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("switch times must be strictly increasing")
        if any(i < 1 for _, i in sw):
            raise ValueError("subsystem indices are 1-based")

    @property
    def n_switches(self) -> int:
        return len(self.switches) - 1

    def index_at(self, t: float) -> int:
        active = self.switches[0][1]
        for time, idx in self.switches:
            if time <= t:
                active = idx
            else:
                break
        return active

    @classmethod
    def constant(cls, index: int, horizon: float) -> "SwitchingSignal":
        return cls(horizon, ((0.0, index),))


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step solution samples with the active index at each grid point."""

    times: np.ndarray
    states: np.ndarray
    active: np.ndarray
    diverged: bool = False
    diverged_at: float | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class AbsorptionRecord:
    x0: np.ndarray
    signal_index: int
    first_entry_time: float | None
    post_entry_max: float
    violated: bool


@dataclass
class AbsorptionReport:
    gamma: float
    re_exit_tolerance: float
    records: list
    not_entered: int

    @property
    def violations(self) -> int:
        return sum(1 for r in self.records if r.violated)

    @property
    def max_post_entry(self) -> float:
        return max((r.post_entry_max for r in self.records), default=-np.inf)


def _grid(horizon: float, h: float):
    """Step sizes and grid times: full h-steps plus one exact remainder step
    so the grid ends at the horizon."""
    if h <= 0:
        raise ValueError("step must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    full = int(np.floor(horizon / h + 1e-9))
    remainder = horizon - full * h
    steps = [h] * full
    times = [k * h for k in range(full + 1)]
    if remainder > 1e-12 * max(1.0, horizon):
        steps.append(remainder)
        times.append(horizon)
    elif full == 0:
        steps.append(horizon)
        times.append(horizon)
    return np.array(steps), np.array(times)


def _active_steps(signal: SwitchingSignal, n_points: int, h: float) -> np.ndarray:
    """Active subsystem index at each grid point, switch times snapped to
    multiples of h."""
    active = np.empty(n_points, dtype=np.intp)
    switch_steps = [(int(round(t / h)), idx) for t, idx in signal.switches]
    pos = 0
    current = switch_steps[0][1]
    for k in range(n_points):
        while pos < len(switch_steps) and switch_steps[pos][0] <= k:
            current = switch_steps[pos][1]
            pos += 1
        active[k] = current
    return active


def _polynomial_field_kernel(f: PolynomialVectorField):
    """Fused evaluator: one shared power table for all components."""
    exponents = sorted({m for c in f.components for m in c.terms},
                       key=lambda m: (sum(m), m))
    index = {m: k for k, m in enumerate(exponents)}
    E = np.array(exponents, dtype=np.int64).reshape(len(exponents), f.dimension)
    C = np.zeros((f.dimension, len(exponents)))
    for row, comp in enumerate(f.components):
        for mono, coef in comp.terms.items():
            C[row, index[mono]] = coef

    def evaluate(pts):
        return evaluate_exponent_form(pts, E, C.T)

    return evaluate


def _field_evaluators(system: SwitchedSystem):
    """Batch evaluators x (k, n) -> f(x) (k, n), with a linear fast path."""
    evaluators = []
    for f in system.fields:
        if f.is_linear():
            A = f.linear_matrix()
            evaluators.append(lambda pts, A=A: pts @ A.T)
        else:
            evaluators.append(_polynomial_field_kernel(f))
    return evaluators


def _rk4_step(evaluate, x: np.ndarray, h: float) -> np.ndarray:
    k1 = evaluate(x)
    k2 = evaluate(x + 0.5 * h * k1)
    k3 = evaluate(x + 0.5 * h * k2)
    k4 = evaluate(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: SwitchedSystem, signal: SwitchingSignal,
              x0: Sequence[float], h: float, horizon: float) -> Trajectory:
    """RK4 on each constant-index segment of the snapped signal.

    Returns a truncated trajectory with the divergence flag set when the
    state norm passes the guard; that is evidence, not a failure.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.dimension,):
        raise ValueError("initial state has wrong dimension")
    if any(i > system.n_subsystems for _, i in signal.switches):
        raise ValueError("signal index exceeds subsystem count")
    dts, times = _grid(horizon, h)
    active = _active_steps(signal, len(times), h)
    evaluators = _field_evaluators(system)

    states = np.empty((len(times), system.dimension))
    states[0] = x0
    x = x0[None, :]
    for k, dt in enumerate(dts):
        x = _rk4_step(evaluators[active[k] - 1], x, dt)
        states[k + 1] = x[0]
        if not np.all(np.isfinite(x)) or np.linalg.norm(x[0]) > DIVERGENCE_GUARD:
            return Trajectory(times[:k + 2], states[:k + 2], active[:k + 2],
                              diverged=True, diverged_at=float(times[k + 1]))
    return Trajectory(times, states, active)


def random_switching(n_subsystems: int, horizon: float, mean_dwell: float,
                     seed: int) -> SwitchingSignal:
    """Exponential inter-switch gaps, uniform indices, deterministic per seed."""
    if mean_dwell <= 0:
        raise ValueError("mean dwell must be positive")
    rng = np.random.default_rng(seed)
    switches = [(0.0, int(rng.integers(1, n_subsystems + 1)))]
    t = float(rng.exponential(mean_dwell))
    while t < horizon:
        switches.append((t, int(rng.integers(1, n_subsystems + 1))))
        t += float(rng.exponential(mean_dwell))
    return SwitchingSignal(horizon, tuple(switches))


def adversarial_switching(system: SwitchedSystem, V: Polynomial | None,
                          x0: Sequence[float], h: float,
                          horizon: float) -> SwitchingSignal:
    """Greedy signal maximising the derivative of V along the flow.

    At each grid point the subsystem with the largest grad(V) . f_i is
    selected, ties broken by the lowest index; V defaults to ||x||_2^2.
    """
    n = system.dimension
    if V is None:
        V = Polynomial(n, {tuple(2 if k == j else 0 for k in range(n)): 1.0
                           for j in range(n)})
    lies = [lie_derivative(V, f) for f in system.fields]
    evaluators = _field_evaluators(system)
    dts, times = _grid(horizon, h)

    x = np.asarray(x0, dtype=float)[None, :]
    switches = []
    current = None
    for k, dt in enumerate(dts):
        rates = [lie.evaluate_many(x)[0] for lie in lies]
        choice = int(np.argmax(rates)) + 1
        if current is None or choice != current:
            switches.append((times[k], choice))
            current = choice
        x = _rk4_step(evaluators[choice - 1], x, dt)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x[0]) > DIVERGENCE_GUARD:
            break
    return SwitchingSignal(horizon, tuple(switches))


def check_absorption(system: SwitchedSystem, cert: AbsorbingSetCertificate,
                     initial_states: np.ndarray,
                     signals: Sequence[SwitchingSignal], h: float = 1e-3,
                     horizon: float | None = None) -> AbsorptionReport:
    """Empirical absorption check of {V <= gamma} over a batch of starts.

    For every (x0, signal) pair the first entry time into the sublevel set
    is recorded and the post-entry excess of V over gamma is tracked; a
    re-exit beyond gamma*(1 + tolerance) is a violation.  Divergence under
    a verified certificate is a hard contradiction.
    """
    if cert.gamma is None:
        raise ValueError("certificate has no gamma level")
    X0 = np.atleast_2d(np.asarray(initial_states, dtype=float))
    if X0.shape[1] != system.dimension:
        raise ValueError("initial states have wrong dimension")
    evaluators = _field_evaluators(system)
    V = cert.lyapunov
    gamma = cert.gamma
    n_starts = len(X0)
    n_signals = len(signals)

    # one batch across all (signal, start) pairs; per step the rows are
    # grouped by their signal's active subsystem
    T = horizon if horizon is not None else max(s.horizon for s in signals)
    dts, times = _grid(T, h)
    active = np.stack([_active_steps(s, len(times), h) for s in signals])
    signal_of_row = np.repeat(np.arange(n_signals), n_starts)

    x = np.tile(X0, (n_signals, 1))
    entered = np.zeros(len(x), dtype=bool)
    entry_time = np.full(len(x), np.nan)
    post_max = np.full(len(x), -np.inf)

    v = V.evaluate_many(x)
    entered |= v <= gamma
    entry_time[entered] = 0.0

    for k, dt in enumerate(dts):
        row_active = active[signal_of_row, k]
        for idx in np.unique(row_active):
            rows = row_active == idx
            x[rows] = _rk4_step(evaluators[idx - 1], x[rows], dt)
        norms = np.linalg.norm(x, axis=1)
        if not np.all(np.isfinite(x)) or np.any(norms > DIVERGENCE_GUARD):
            bad = int(np.argmax(~np.isfinite(x).all(axis=1)
                                | (norms > DIVERGENCE_GUARD)))
            raise CertificateContradictionError(
                f"trajectory diverged under a certified system "
                f"(signal {signal_of_row[bad]}, t={times[k + 1]})")
        v = V.evaluate_many(x)
        newly = (~entered) & (v <= gamma)
        entry_time[newly] = times[k + 1]
        entered |= newly
        post_max = np.where(entered, np.maximum(post_max, v - gamma), post_max)

    records = []
    not_entered = 0
    for row in range(len(x)):
        s_idx = int(signal_of_row[row])
        start = X0[row % n_starts]
        if not entered[row]:
            not_entered += 1
            records.append(AbsorptionRecord(start, s_idx, None, -np.inf, False))
        else:
            excess = float(post_max[row])
            records.append(AbsorptionRecord(
                start, s_idx, float(entry_time[row]), excess,
                excess > gamma * RE_EXIT_TOLERANCE))
    return AbsorptionReport(gamma, RE_EXIT_TOLERANCE, records, not_entered)
