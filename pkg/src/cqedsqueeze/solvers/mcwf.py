"""Monte Carlo wave-function (quantum-jump) unraveling of the Lindblad equation.

Each trajectory evolves under ``H_nh = H - (i/2) sum_k c_k^dag c_k`` without
renormalization. When ``||psi||^2`` falls below a uniform random threshold a
jump ``c_k`` is applied with probability proportional to ``||c_k psi||^2``,
the state is renormalized and a new threshold is drawn.

Seeding: trajectory ``i`` of an ensemble draws from
``numpy.random.Generator(PCG64(SeedSequence(master_seed, spawn_key=(i,))))``.
This is numpy's documented, version-stable spawning scheme, so trajectory
``i`` can be reproduced alone with :func:`child_seed` and runs are
independent of execution order.

Trajectories that have not jumped yet share one state vector: the no-jump
evolution is deterministic, so they only differ in their thresholds. A
trajectory gets its own state at its first jump. All distinct states are
stepped together as the columns of one matrix, so the cost scales with the
number of jumped trajectories rather than with ``n_traj``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import IntegratorFailure, TruncationWarning
from ..fockspace import KetState, OperatorMatrix, TimeDependentOperator, _require_same
from .common import (
    DecoherenceRates,
    Generator,
    TimeGrid,
    choose_dt,
    collapse_operators,
    damping_rate,
    non_hermitian,
    rk4_step,
    state_scale,
)
from .guard import TruncationGuard

JUMP_SUBSTEPS = 16


def child_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class JumpRecord:
    trajectory: int
    time: float
    channel: str


@dataclass
class TrajectoryResult:
    times: np.ndarray
    expect: np.ndarray  # (n_times, n_ops)
    states: np.ndarray | None  # normalized, (n_times, dim)
    jumps: list[JumpRecord]
    dt: float
    spec: object = None

    def ket(self, k: int) -> KetState:
        return KetState(self.spec, self.states[k])


@dataclass
class TrajectoryEnsemble:
    times: np.ndarray
    n_traj: int
    master_seed: int
    values: np.ndarray  # (n_traj, n_times, n_ops)
    jumps: list[JumpRecord]
    dt: float
    channels: tuple[str, ...]
    columns: int = 1
    warnings: list[str] = field(default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        dev = np.abs(self.values - self.mean)
        return np.sqrt((dev ** 2).sum(axis=0) / (self.n_traj - 1)) / np.sqrt(self.n_traj)

    def jump_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.channels}
        for j in self.jumps:
            counts[j.channel] += 1
        return counts

    def fraction_jumped(self, t: float, channel: str | None = None) -> float:
        """Fraction of trajectories with at least one (matching) jump at or before ``t``."""
        hit = {j.trajectory for j in self.jumps if j.time <= t and (channel is None or j.channel == channel)}
        return len(hit) / self.n_traj


class _Member:
    __slots__ = ("index", "rng", "threshold")

    def __init__(self, index: int, rng: np.random.Generator):
        self.index = index
        self.rng = rng
        self.threshold = rng.random()


class _Engine:
    def __init__(self, H: TimeDependentOperator, rates: DecoherenceRates, psi0: KetState, grid: TimeGrid,
                 e_ops: list[OperatorMatrix], norm_tol: float):
        _require_same(H.spec, psi0.spec)
        for op in e_ops:
            _require_same(H.spec, op.spec)
        c_ops = collapse_operators(rates, H.spec)
        self.channels = tuple(name for name, _ in c_ops)
        self.jump_ops = [c.matrix for _, c in c_ops]
        self.gen = Generator(non_hermitian(H, c_ops))
        self.dt = choose_dt(H, grid, state_scale(H, psi0.amplitudes), norm_tol, 0.5 * damping_rate(c_ops))
        self.times = grid.times
        self.plan = grid.substeps(self.dt)
        self.e_ops = [op.matrix for op in e_ops]
        self.spec = H.spec
        self.guard = TruncationGuard(H.spec)
        self.jumps: list[JumpRecord] = []
        self.max_columns = 1

    def observe(self, Y: np.ndarray) -> np.ndarray:
        """``<psi|O|psi> / <psi|psi>`` for every column of ``Y``: shape ``(n_cols, n_ops)``."""
        n2 = np.einsum("ij,ij->j", Y.conj(), Y).real
        out = np.empty((Y.shape[1], len(self.e_ops)), dtype=complex)
        for i, op in enumerate(self.e_ops):
            out[:, i] = np.einsum("ij,ij->j", Y.conj(), op @ Y) / n2
        return out

    def jump(self, psi: np.ndarray, member: _Member, t: float) -> np.ndarray:
        weights = np.array([np.vdot(v, v).real for v in (c @ psi for c in self.jump_ops)])
        total = weights.sum()
        if total > 0:
            k = int(np.searchsorted(np.cumsum(weights), member.rng.random() * total, side="right"))
            k = min(k, len(weights) - 1)
            psi = self.jump_ops[k] @ psi
            self.jumps.append(JumpRecord(member.index, float(t), self.channels[k]))
        psi = psi / np.linalg.norm(psi)
        member.threshold = member.rng.random()
        return psi

    def _substep_path(self, psi, t, h):
        hs = h / JUMP_SUBSTEPS
        path, y = [], psi
        for q in range(JUMP_SUBSTEPS):
            y = rk4_step(self.gen, t + q * hs, y, hs)
            path.append((y, np.vdot(y, y).real))
        return path

    def _finish_step(self, path, t, h, member):
        """Jump ``member`` at the first substep below its threshold, then integrate to the step end."""
        hs = h / JUMP_SUBSTEPS
        s = next((i for i, (_, n2) in enumerate(path, start=1) if n2 < member.threshold), JUMP_SUBSTEPS)
        y = self.jump(path[s - 1][0], member, t + s * hs)
        for q in range(s, JUMP_SUBSTEPS):
            y = rk4_step(self.gen, t + q * hs, y, hs)
            if np.vdot(y, y).real < member.threshold:
                y = self.jump(y, member, t + (q + 1) * hs)
        return y

    def run(self, psi0: np.ndarray, members: list[_Member], values: np.ndarray, states: np.ndarray | None):
        """Integrate all distinct trajectory states in lockstep as columns of one matrix.

        Column 0 starts as the shared no-jump state; a member moves to its own
        column at its first jump and keeps it afterwards.
        """
        n = len(members)
        col = np.zeros(n, dtype=np.intp)
        thresholds = np.array([m.threshold for m in members])
        Y = psi0.astype(complex).reshape(-1, 1).copy()
        owners = [list(range(n))]  # members per column
        self._record(0, Y, col, values, states)
        can_jump = bool(self.jump_ops)
        for k, (h, n_steps) in enumerate(self.plan):
            t0 = self.times[k]
            for j in range(n_steps):
                t = t0 + j * h
                new = rk4_step(self.gen, t, Y, h)
                if can_jump:
                    n2 = np.einsum("ij,ij->j", new.conj(), new).real
                    if not np.all(np.isfinite(n2)):
                        raise IntegratorFailure(f"non-finite amplitudes at t={t:.6g}")
                    hit = np.flatnonzero(thresholds > n2[col])
                    if hit.size:
                        Y, new = self._jump_members(hit, Y, new, col, owners, members, thresholds, t, h)
                Y = new
            if not np.all(np.isfinite(Y)):
                raise IntegratorFailure(f"non-finite amplitudes at t={self.times[k + 1]:.6g}")
            self._record(k + 1, Y, col, values, states)

    def _jump_members(self, hit, Y, new, col, owners, members, thresholds, t, h):
        paths = {}
        for i in hit:
            c = int(col[i])
            if c not in paths:
                paths[c] = self._substep_path(Y[:, c], t, h)
            y = self._finish_step(paths[c], t, h, members[i])
            thresholds[i] = members[i].threshold
            if len(owners[c]) == 1:
                new[:, c] = y
                continue
            owners[c].remove(int(i))
            owners.append([int(i)])
            col[i] = len(owners) - 1
            Y = np.concatenate([Y, Y[:, c:c + 1]], axis=1)
            new = np.concatenate([new, y.reshape(-1, 1)], axis=1)
        self.max_columns = max(self.max_columns, len(owners))
        return Y, new

    def _record(self, k, Y, col, values, states):
        values[:, k, :] = self.observe(Y)[col]
        for c in np.unique(col):
            self.guard.check_ket(Y[:, c], self.times[k])
        if states is not None:
            psi = Y[:, col[0]]
            states[k] = psi / np.linalg.norm(psi)


def mcwf_trajectory(H, rates: DecoherenceRates, psi0: KetState, grid: TimeGrid, seed,
                    e_ops: list[OperatorMatrix] | None = None, norm_tol: float = 1e-6) -> TrajectoryResult:
    """One quantum trajectory; deterministic for a given ``seed`` (int, SeedSequence or Generator)."""
    if isinstance(H, OperatorMatrix):
        H = TimeDependentOperator.static(H)
    if not psi0.is_normalized():
        raise ValueError("initial state must be normalized")
    e_ops = list(e_ops or [])
    eng = _Engine(H, rates, psi0, grid, e_ops, norm_tol)
    values = np.zeros((1, len(grid.times), len(e_ops)), dtype=complex)
    states = np.zeros((len(grid.times), psi0.spec.total_dim), dtype=complex)
    eng.run(psi0.amplitudes, [_Member(0, _rng(seed))], values, states)
    for msg in eng.guard.messages:
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return TrajectoryResult(np.asarray(grid.times), values[0], states, eng.jumps, eng.dt, psi0.spec)


def mcwf_ensemble(H, rates: DecoherenceRates, psi0: KetState, grid: TimeGrid, n_traj: int,
                  master_seed: int, e_ops: list[OperatorMatrix] | None = None,
                  norm_tol: float = 1e-6) -> TrajectoryEnsemble:
    """Ensemble of ``n_traj`` trajectories with per-trajectory values of ``e_ops``."""
    if n_traj < 2:
        raise ValueError("an ensemble needs at least 2 trajectories")
    if isinstance(H, OperatorMatrix):
        H = TimeDependentOperator.static(H)
    if not psi0.is_normalized():
        raise ValueError("initial state must be normalized")
    e_ops = list(e_ops or [])
    eng = _Engine(H, rates, psi0, grid, e_ops, norm_tol)
    members = [_Member(i, _rng(child_seed(master_seed, i))) for i in range(n_traj)]
    values = np.zeros((n_traj, len(grid.times), len(e_ops)), dtype=complex)
    eng.run(psi0.amplitudes, members, values, None)
    eng.jumps.sort(key=lambda j: (j.trajectory, j.time))
    for msg in eng.guard.messages:
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return TrajectoryEnsemble(np.asarray(grid.times), n_traj, master_seed, values, eng.jumps, eng.dt,
                              eng.channels, eng.max_columns, list(eng.guard.messages))
