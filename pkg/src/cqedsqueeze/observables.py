"""Quadratures, EPR-type total variance, squeezing in dB and run diagnostics.

The total variance ``V = <(du)^2> + <(dv)^2>`` with ``u = X_a + X_b`` and
``v = P_a - P_b`` only needs seven moments::

    <u^2 + v^2> = 4 Re(e^{-2i theta} <ab>) + <a^dag a> + <a a^dag> + <b^dag b> + <b b^dag>
    <u> = sqrt(2) Re(e^{-i theta} (<a> + <b>))
    <v> = sqrt(2) Im(e^{-i theta} (<a> - <b>))

so states are reduced to a :data:`MOMENT_NAMES` vector first. ``a a^dag`` is
taken on the truncated space, which matches building ``u`` and ``v`` from
truncated matrices. For states that include the qubit the moments are full
expectation values, i.e. the qubit is traced out implicitly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

from .errors import IncompatibleSpaces, InvalidVariance
from .fockspace import (
    MODE_A,
    MODE_B,
    QUBIT,
    DensityOperator,
    HilbertSpec,
    KetState,
    OperatorMatrix,
    annihilation_op,
    atom_op,
    embed,
    expectation,
)

MOMENT_NAMES = ("a", "b", "ab", "ada", "aad", "bdb", "bbd")
DIAGNOSTIC_NAMES = ("n_a", "n_b", "p_g", "p_e", "sigma_z", "leak_a", "leak_b")
VACUUM_VARIANCE = 2.0


def _require_modes(spec: HilbertSpec) -> None:
    if MODE_A not in spec or MODE_B not in spec:
        raise IncompatibleSpaces(f"EPR variance needs modes 'a' and 'b'; spec has {spec.labels}")


def _mode(spec: HilbertSpec, label: str) -> OperatorMatrix:
    return embed(annihilation_op(spec.dim_of(label), label), spec, label)


def quadrature_ops(spec: HilbertSpec, mode: str, theta: float) -> tuple[OperatorMatrix, OperatorMatrix]:
    """``X = (a e^{-i theta} + a^dag e^{i theta})/sqrt(2)`` and ``P = -i (a e^{-i theta} - a^dag e^{i theta})/sqrt(2)``."""
    a = _mode(spec, mode)
    rot = np.exp(-1j * theta) * a
    x = (rot + rot.dag()) * (1 / math.sqrt(2))
    p = (rot - rot.dag()) * (-1j / math.sqrt(2))
    return OperatorMatrix(spec, x.matrix, True), OperatorMatrix(spec, p.matrix, True)


def moment_operators(spec: HilbertSpec) -> list[OperatorMatrix]:
    _require_modes(spec)
    a, b = _mode(spec, MODE_A), _mode(spec, MODE_B)
    ops = [a, b, a @ b, a.dag() @ a, a @ a.dag(), b.dag() @ b, b @ b.dag()]
    return [OperatorMatrix(spec, op.matrix, hermitian_hint=i >= 3) for i, op in enumerate(ops)]


def moments(state: KetState | DensityOperator) -> np.ndarray:
    return np.array([expectation(op, state) for op in moment_operators(state.spec)])


def rotate_moments(m: np.ndarray, phi_a: float, phi_b: float) -> np.ndarray:
    """Moments after ``a -> a e^{-i phi_a}``, ``b -> b e^{-i phi_b}`` (a frame change).

    Works on any array whose last axis follows :data:`MOMENT_NAMES`.
    """
    out = np.array(m, dtype=complex, copy=True)
    out[..., 0] *= np.exp(-1j * phi_a)
    out[..., 1] *= np.exp(-1j * phi_b)
    out[..., 2] *= np.exp(-1j * (phi_a + phi_b))
    return out


def _parts(m: np.ndarray, theta: float):
    c = np.exp(-1j * theta)
    second = 4 * np.real(c * c * m[..., 2]) + np.real(m[..., 3] + m[..., 4] + m[..., 5] + m[..., 6])
    mu = math.sqrt(2) * np.real(c * (m[..., 0] + m[..., 1]))
    mv = math.sqrt(2) * np.imag(c * (m[..., 0] - m[..., 1]))
    return second, mu, mv


def variance_from_moments(m: np.ndarray, theta: float) -> float:
    second, mu, mv = _parts(np.asarray(m), theta)
    return float(second - mu ** 2 - mv ** 2)


def ensemble_variance(samples: np.ndarray, theta: float) -> tuple[float, float]:
    """Variance of the trajectory-averaged state and its standard error.

    ``samples`` has shape ``(n_traj, 7)``. The variance is built from the mean
    moments (the mixed state), not averaged per trajectory; the standard
    error linearizes it around the mean.
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    value = variance_from_moments(mean, theta)
    second, mu, mv = _parts(samples, theta)
    _, mu_bar, mv_bar = _parts(mean, theta)
    influence = second - 2 * mu_bar * mu - 2 * mv_bar * mv
    err = float(np.std(influence, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return value, err


def epr_variance(state: KetState | DensityOperator, theta: float) -> float:
    """Total EPR variance of the two-mode part of ``state`` along quadrature angle ``theta``."""
    _require_modes(state.spec)
    return variance_from_moments(moments(state), theta)


def squeezing_db(v_ar: float) -> float:
    """``-10 log10(V / 2)``: 0 dB at the vacuum level, positive when squeezed."""
    if not v_ar > 0:
        raise InvalidVariance(f"variance must be positive, got {v_ar}")
    return -10.0 * math.log10(v_ar / VACUUM_VARIANCE) + 0.0


def variance_from_db(db: float) -> float:
    return VACUUM_VARIANCE * 10.0 ** (-db / 10.0)


def is_entangled(v_ar: float) -> bool:
    """Duan-type witness: total variance below the vacuum value."""
    return v_ar < VACUUM_VARIANCE


def ideal_variance(r: float) -> float:
    """``2 e^{-2r}`` for an ideal two-mode squeezed vacuum on its squeezing axis."""
    return VACUUM_VARIANCE * math.exp(-2.0 * r)


def optimize_theta(target, n_grid: int = 32, tol: float = 1e-6) -> tuple[float, float]:
    """Angle in ``[0, pi)`` minimizing the variance, and the minimum.

    ``target`` is a state or a moment vector. A coarse grid is refined by
    golden-section search around the best grid point.
    """
    if n_grid < 16:
        raise ValueError("use at least 16 grid points")
    m = moments(target) if isinstance(target, (KetState, DensityOperator)) else np.asarray(target)

    def f(th):
        return variance_from_moments(m, th)

    grid = np.arange(n_grid) * (math.pi / n_grid)
    vals = np.array([f(th) for th in grid])
    i = int(np.argmin(vals))
    step = math.pi / n_grid
    lo, mid, hi = grid[i] - step, grid[i], grid[i] + step
    if not (vals[i] < f(lo) and vals[i] < f(hi)):
        return float(grid[i] % math.pi), float(vals[i])
    res = minimize_scalar(f, bracket=(lo, mid, hi), method="golden", tol=tol)
    return float(res.x % math.pi), float(res.fun)


def ideal_tmss(zeta: complex, spec: HilbertSpec) -> KetState:
    """Analytic ``S(zeta)|0,0>`` for ``S(zeta) = exp(zeta ab - zeta* a^dag b^dag)``, truncated and renormalized."""
    _require_modes(spec)
    r = abs(zeta)
    phase = -np.conj(zeta) / r if r > 0 else 1.0
    n_max = min(spec.dim_of(MODE_A), spec.dim_of(MODE_B))
    n = np.arange(n_max)
    coeff = (phase ** n) * np.tanh(r) ** n / np.cosh(r)
    psi = np.zeros(spec.dims, dtype=complex)
    idx = [0] * len(spec.dims)
    ia, ib = spec.index(MODE_A), spec.index(MODE_B)
    for k in n:
        idx[ia], idx[ib] = k, k
        psi[tuple(idx)] = coeff[k]
    psi = psi.reshape(-1)
    return KetState(spec, psi / np.linalg.norm(psi))


def diagnostic_operators(spec: HilbertSpec, n_levels: int = 2) -> list[OperatorMatrix]:
    """Operators behind :data:`DIAGNOSTIC_NAMES`; qubit entries are zero when there is no qubit."""
    _require_modes(spec)
    ops = []
    for label in (MODE_A, MODE_B):
        a = _mode(spec, label)
        ops.append(OperatorMatrix(spec, (a.dag() @ a).matrix, True))
    if QUBIT in spec:
        levels = spec.dim_of(QUBIT)
        for kind in ("sigma_gg", "sigma_ee", "sigma_z"):
            ops.append(embed(atom_op(levels, kind), spec, QUBIT))
    else:
        zero = OperatorMatrix(spec, sp.csr_matrix((spec.total_dim, spec.total_dim)), True)
        ops.extend([zero, zero, zero])
    return ops + leak_operators(spec, n_levels)


def leak_operators(spec: HilbertSpec, n_levels: int = 2) -> list[OperatorMatrix]:
    """Projectors on the top ``n_levels`` Fock states of mode a and of mode b."""
    ops = []
    for label in (MODE_A, MODE_B):
        dim = spec.dim_of(label)
        proj = np.zeros(dim)
        proj[-n_levels:] = 1.0
        local = OperatorMatrix(HilbertSpec.single(label, dim), sp.diags(proj, format="csr"), True)
        ops.append(embed(local, spec, label))
    return ops


def diagnostics(state: KetState | DensityOperator, n_levels: int = 2) -> dict[str, float]:
    """Photon numbers, qubit populations, ``<sigma_z>`` and top-level leakage per mode."""
    values = [expectation(op, state).real for op in diagnostic_operators(state.spec, n_levels)]
    return dict(zip(DIAGNOSTIC_NAMES, values))


@dataclass
class SqueezingRecord:
    """One output row: variance at the selected angle plus the optimized one."""

    t: float
    r: float
    V_ar: float
    dB: float
    theta: float
    entangled: bool
    V_ar_stderr: float | None = None
    theta_opt: float | None = None
    V_ar_min: float | None = None

    @classmethod
    def from_moments(cls, t: float, r: float, m: np.ndarray, theta: float, optimize: bool = True,
                     use_optimized: bool = False, samples: np.ndarray | None = None) -> "SqueezingRecord":
        """Build a record; with ``samples`` (per-trajectory moments) standard errors are attached."""
        th_opt = v_min = None
        if optimize:
            th_opt, v_min = optimize_theta(m)
        theta_used = th_opt if (use_optimized and optimize) else theta
        if samples is not None:
            v, err = ensemble_variance(samples, theta_used)
        else:
            v, err = variance_from_moments(m, theta_used), None
        return cls(t=t, r=r, V_ar=v, dB=squeezing_db(v), theta=theta_used, entangled=is_entangled(v),
                   V_ar_stderr=err, theta_opt=th_opt, V_ar_min=v_min)

    def to_dict(self) -> dict:
        return asdict(self)
