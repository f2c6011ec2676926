"""Pure-state propagation for time-dependent Hamiltonians."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import StepSizeTooLarge, TruncationWarning
from ..fockspace import KetState, TimeDependentOperator, OperatorMatrix, _require_same
from .common import Generator, TimeGrid, choose_dt, rk4_step, state_scale
from .guard import TruncationGuard


@dataclass
class SchrodingerResult:
    times: np.ndarray
    states: np.ndarray  # (n_times, dim)
    spec: object
    dt: float
    norm_drift: float
    warnings: list[str] = field(default_factory=list)

    def ket(self, k: int) -> KetState:
        return KetState(self.spec, self.states[k])


def _as_td(H) -> TimeDependentOperator:
    if isinstance(H, OperatorMatrix):
        return TimeDependentOperator.static(H)
    return H


def propagate_schrodinger(H, psi0: KetState, grid: TimeGrid, norm_tol: float = 1e-6,
                          renormalize: bool = False, guard: TruncationGuard | None = None) -> SchrodingerResult:
    """Fixed-step RK4 integration of ``i d psi/dt = H(t) psi``.

    The norm is not renormalized unless asked; the largest deviation from 1
    is reported and, above ``norm_tol``, raises :class:`StepSizeTooLarge`.
    """
    H = _as_td(H)
    _require_same(H.spec, psi0.spec)
    if not psi0.is_normalized():
        raise ValueError("initial state must be normalized")
    guard = TruncationGuard(psi0.spec) if guard is None else guard
    y = psi0.amplitudes.copy()
    dt = choose_dt(H, grid, state_scale(H, y), norm_tol)
    f = Generator(H)

    states = np.empty((len(grid.times), y.size), dtype=complex)
    states[0] = y
    drift = 0.0
    t = grid.t_start
    for k, (h, n) in enumerate(grid.substeps(dt), start=1):
        t0 = grid.times[k - 1]
        for j in range(n):
            t = t0 + j * h
            y = rk4_step(f, t, y, h)
        if not np.all(np.isfinite(y)):
            raise StepSizeTooLarge(f"non-finite amplitudes at t={grid.times[k]:.6g}")
        nrm = np.linalg.norm(y)
        drift = max(drift, abs(nrm - 1.0))
        if renormalize:
            y = y / nrm
        states[k] = y
        guard.check_ket(y, grid.times[k])
    if drift > norm_tol and not renormalize:
        raise StepSizeTooLarge(f"norm drifted by {drift:.3g} > {norm_tol:g} with dt={dt:.3g}; pass a smaller dt")
    for msg in guard.messages:
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return SchrodingerResult(np.asarray(grid.times), states, psi0.spec, dt, drift, list(guard.messages))
