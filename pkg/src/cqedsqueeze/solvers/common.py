"""Shared pieces of the time-evolution engines: rates, grids, RK4 stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..fockspace import (
    MODE_A,
    MODE_B,
    QUBIT,
    CompiledOperator,
    HilbertSpec,
    OperatorMatrix,
    TimeDependentOperator,
    annihilation_op,
    atom_op,
    embed,
)

# RK4 loses norm at roughly (w dt)^6 / 72 per step for an eigenfrequency w.
_RK4_DRIFT_COEFF = 1.0 / 72.0


@dataclass(frozen=True)
class DecoherenceRates:
    """Rates of the four dissipators, in the same units as the Hamiltonian."""

    gamma: float = 0.0
    gamma_ph: float = 0.0
    kappa_a: float = 0.0
    kappa_b: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "gamma_ph", "kappa_a", "kappa_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name} must be >= 0")

    @property
    def any(self) -> bool:
        return any(v > 0 for v in (self.gamma, self.gamma_ph, self.kappa_a, self.kappa_b))

    def scaled(self, factor: float) -> "DecoherenceRates":
        return DecoherenceRates(self.gamma * factor, self.gamma_ph * factor,
                                self.kappa_a * factor, self.kappa_b * factor)


def collapse_operators(rates: DecoherenceRates, spec: HilbertSpec) -> list[tuple[str, OperatorMatrix]]:
    """Jump operators ``sqrt(gamma) s_ge, sqrt(gamma_ph) s_ee, sqrt(kappa_a) a, sqrt(kappa_b) b``.

    The prefactor convention ``(rate/2) D[O]`` with ``D[O] = 2 O rho O^dag - {O^dag O, rho}``
    is the usual Lindblad form with jump operator ``sqrt(rate) O``. Zero rates
    and absent subsystems are skipped.
    """
    ops = []
    if QUBIT in spec:
        levels = spec.dim_of(QUBIT)
        if rates.gamma > 0:
            ops.append(("decay", math.sqrt(rates.gamma) * embed(atom_op(levels, "sigma_ge"), spec, QUBIT)))
        if rates.gamma_ph > 0:
            ops.append(("dephasing", math.sqrt(rates.gamma_ph) * embed(atom_op(levels, "sigma_ee"), spec, QUBIT)))
    for label, rate in ((MODE_A, rates.kappa_a), (MODE_B, rates.kappa_b)):
        if rate > 0 and label in spec:
            op = embed(annihilation_op(spec.dim_of(label), label), spec, label)
            ops.append((f"kappa_{label}", math.sqrt(rate) * op))
    return ops


def non_hermitian(H: TimeDependentOperator, c_ops) -> TimeDependentOperator:
    """``H - (i/2) sum_k c_k^dag c_k``."""
    if not c_ops:
        return H
    acc = sp.csr_matrix((H.spec.total_dim, H.spec.total_dim), dtype=complex)
    for _, c in c_ops:
        acc = acc + c.matrix.conj().T @ c.matrix
    return H.plus_constant(OperatorMatrix(H.spec, -0.5j * acc))


@dataclass(frozen=True)
class TimeGrid:
    """Output times plus step control.

    ``dt`` caps the RK4 step; when ``None`` the engines pick it from the
    fastest frequency in the Hamiltonian (``steps_per_period`` steps per
    period) and from an RK4 norm-drift budget.
    """

    times: tuple[float, ...]
    dt: float | None = None
    steps_per_period: float = 40.0

    def __post_init__(self):
        times = tuple(float(t) for t in np.asarray(self.times, dtype=float).ravel())
        object.__setattr__(self, "times", times)
        if len(times) < 1:
            raise ValueError("a time grid needs at least one output time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("output times must be strictly increasing")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")

    @classmethod
    def linspace(cls, t_end: float, samples: int, t_start: float = 0.0, **kw) -> "TimeGrid":
        return cls(tuple(np.linspace(t_start, t_end, samples)), **kw)

    @classmethod
    def for_squeezing(cls, lam: complex, r_max: float, samples: int, **kw) -> "TimeGrid":
        """Grid whose last time is ``tau = r_max / |lam|``."""
        return cls.linspace(r_max / abs(lam), samples, **kw)

    @property
    def t_start(self) -> float:
        return self.times[0]

    @property
    def t_end(self) -> float:
        return self.times[-1]

    def substeps(self, dt_max: float) -> list[tuple[float, int]]:
        """Per output interval: (step size, number of steps)."""
        out = []
        for t0, t1 in zip(self.times[:-1], self.times[1:]):
            n = max(1, int(math.ceil((t1 - t0) / dt_max - 1e-9)))
            out.append(((t1 - t0) / n, n))
        return out


def damping_rate(c_ops) -> float:
    """Gershgorin bound on ``||sum_k c_k^dag c_k||``, the fastest decay the jump operators can cause."""
    if not c_ops:
        return 0.0
    acc = None
    for _, c in c_ops:
        term = abs(c.matrix.conj().T @ c.matrix)
        acc = term if acc is None else acc + term
    return float(np.max(np.asarray(acc.sum(axis=1)))) if acc.nnz else 0.0


def choose_dt(H: TimeDependentOperator, grid: TimeGrid, state_scale: float, norm_tol: float = 1e-6,
              damping: float = 0.0) -> float:
    """Step size: resolve the fastest frequency and keep RK4 norm drift under ``norm_tol / 4``.

    ``state_scale`` estimates the largest eigenfrequency the state actually
    occupies (e.g. ``||H psi0||``); the frequency rule uses the Gershgorin
    bound of ``H`` and the coefficient frequencies. ``damping`` (see
    :func:`damping_rate`) adds the same budget for the real decay rates,
    whose RK4 local error is ``(rate dt)^5 / 120``.
    """
    if grid.dt is not None:
        return grid.dt
    omega_max = max(H.max_frequency, H.norm_bound(), damping, 1e-300)
    dt = 2 * math.pi / (grid.steps_per_period * omega_max)
    span = grid.t_end - grid.t_start
    if state_scale > 0 and span > 0:
        budget = 0.25 * norm_tol / (_RK4_DRIFT_COEFF * span * state_scale ** 6)
        dt = min(dt, budget ** 0.2)
    if damping > 0 and span > 0:
        dt = min(dt, (0.25 * norm_tol * 120.0 / (span * damping ** 5)) ** 0.2)
    return dt


def state_scale(H: TimeDependentOperator, psi: np.ndarray, samples: int = 8, safety: float = 1.25) -> float:
    """``safety * max_t ||H(t) psi|| / ||psi||`` over a few phases of the fastest coefficient."""
    compiled = H.compile()
    w = H.max_frequency
    ts = np.linspace(0.0, 2 * math.pi / w, samples, endpoint=False) if w > 0 else [0.0]
    nrm = np.linalg.norm(psi)
    best = 0.0
    for t in ts:
        best = max(best, float(np.linalg.norm(compiled.at(t) @ psi)) / nrm)
    return safety * best


class Generator:
    """``y -> -1j * H(t) @ y`` with cached coefficient evaluation."""

    def __init__(self, H: TimeDependentOperator):
        self.compiled: CompiledOperator = H.compile()
        self.compiled.stacked *= -1j
        self.compiled.matrix.data *= -1j

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.compiled.at(t) @ y


def rk4_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
