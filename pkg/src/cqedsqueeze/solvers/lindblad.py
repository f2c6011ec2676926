"""Direct integration of the Lindblad master equation on a dense density matrix."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionTooLarge, IntegratorFailure, TruncationWarning
from ..fockspace import DensityOperator, OperatorMatrix, TimeDependentOperator, _require_same
from .common import (
    DecoherenceRates,
    Generator,
    TimeGrid,
    choose_dt,
    collapse_operators,
    damping_rate,
    non_hermitian,
    rk4_step,
)
from .guard import TruncationGuard

DEFAULT_MAX_DIM = 512


@dataclass
class LindbladResult:
    times: np.ndarray
    expect: np.ndarray  # (n_times, n_ops) complex
    spec: object
    dt: float
    trace_deviation: float
    min_eigenvalue: float
    states: list[DensityOperator] | None = None
    warnings: list[str] = field(default_factory=list)


def _scale(H: TimeDependentOperator, rho: np.ndarray, safety: float = 1.25) -> float:
    compiled = H.compile()
    w = H.max_frequency
    ts = np.linspace(0.0, 2 * math.pi / w, 8, endpoint=False) if w > 0 else [0.0]
    best = 0.0
    for t in ts:
        hm = compiled.at(t)
        h2 = float(np.real(hm.multiply((hm @ rho).T).sum()))
        best = max(best, math.sqrt(max(h2, 0.0)))
    # commutator eigenfrequencies reach twice the energy scale
    return 2.0 * safety * best


def propagate_lindblad(H, rates: DecoherenceRates, rho0: DensityOperator, grid: TimeGrid,
                       e_ops: list[OperatorMatrix] | None = None, max_dim: int = DEFAULT_MAX_DIM,
                       store_states: bool | None = None, check_positivity: bool = True,
                       accuracy_tol: float = 1e-6, guard: TruncationGuard | None = None) -> LindbladResult:
    """RK4 integration of ``d rho/dt = -i[H, rho] + sum_k (r_k/2) D[O_k] rho``.

    Uses ``H_nh = H - (i/2) sum c^dag c`` so that the right-hand side is
    ``-i H_nh rho + h.c. + sum c rho c^dag``. The result is symmetrized at each
    output time. ``trace_deviation`` and ``min_eigenvalue`` cover all outputs.
    """
    if isinstance(H, OperatorMatrix):
        H = TimeDependentOperator.static(H)
    _require_same(H.spec, rho0.spec)
    dim = H.spec.total_dim
    if dim > max_dim:
        raise DimensionTooLarge(
            f"dense density matrix of dimension {dim} exceeds the cap {max_dim}; use the MCWF engine"
        )
    rho0.validate()
    e_ops = list(e_ops or [])
    for op in e_ops:
        _require_same(op.spec, H.spec)
    store = dim <= 128 if store_states is None else store_states
    c_ops = collapse_operators(rates, H.spec)
    h_nh = non_hermitian(H, c_ops)
    rho = rho0.matrix.astype(complex).copy()
    dt = choose_dt(H, grid, _scale(H, rho), accuracy_tol, damping_rate(c_ops))
    gen = Generator(h_nh)
    jumps = [c.matrix for _, c in c_ops]

    def rhs(t, r):
        x = gen(t, r)
        out = x + x.conj().T
        for c in jumps:
            out += c @ (c @ r).conj().T
        return out

    guard = TruncationGuard(H.spec) if guard is None else guard
    n_out = len(grid.times)
    expect = np.zeros((n_out, len(e_ops)), dtype=complex)
    states = [] if store else None
    trace_dev, min_eig = 0.0, math.inf

    def record(k, r):
        nonlocal trace_dev, min_eig
        trace_dev = max(trace_dev, abs(np.trace(r) - 1.0))
        if check_positivity:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(r)[0]))
        for i, op in enumerate(e_ops):
            expect[k, i] = op.matrix.multiply(r.T).sum()
        guard.check_probs(np.real(np.diag(r)), grid.times[k])
        if store:
            states.append(DensityOperator(H.spec, r.copy()))

    record(0, rho)
    for k, (h, n) in enumerate(grid.substeps(dt), start=1):
        t0 = grid.times[k - 1]
        for j in range(n):
            rho = rk4_step(rhs, t0 + j * h, rho, h)
        if not np.all(np.isfinite(rho)):
            raise IntegratorFailure(f"non-finite density matrix at t={grid.times[k]:.6g}")
        rho = 0.5 * (rho + rho.conj().T)
        record(k, rho)
    for msg in guard.messages:
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    if not check_positivity:
        min_eig = float("nan")
    return LindbladResult(np.asarray(grid.times), expect, H.spec, dt, float(trace_dev), min_eig,
                          states, list(guard.messages))
