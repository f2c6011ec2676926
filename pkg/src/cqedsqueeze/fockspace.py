"""Truncated Fock-space and few-level-atom operator algebra.

Basis ordering is fixed by the :class:`HilbertSpec` subsystem order. The model
builders always use ``(qubit, a, b)`` with the qubit index varying slowest,
so a full-system state vector is ``psi[q * N_a * N_b + n_a * N_b + n_b]``.

Operators are stored as CSR matrices (every Hamiltonian term here has O(dim)
nonzeros). Density operators are dense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleSpaces, InvalidDimension, LevelMismatch, SqueezeError

HERMITIAN_TOL = 1e-12

QUBIT = "qubit"
MODE_A = "a"
MODE_B = "b"


@dataclass(frozen=True)
class HilbertSpec:
    """Ordered tensor-product structure, e.g. ``(("qubit", 2), ("a", 30), ("b", 30))``."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        if not subs:
            raise InvalidDimension("a HilbertSpec needs at least one subsystem")
        labels = [label for label, _ in subs]
        if len(set(labels)) != len(labels):
            raise InvalidDimension(f"duplicate subsystem labels in {labels}")
        for label, dim in subs:
            if dim < 2:
                raise InvalidDimension(f"subsystem {label!r} has dimension {dim} < 2")

    @classmethod
    def single(cls, label: str, dim: int) -> "HilbertSpec":
        return cls(((label, dim),))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise IncompatibleSpaces(f"unknown subsystem {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def select(self, labels: Iterable[str]) -> "HilbertSpec":
        """Sub-specification with the given labels, kept in this spec's order."""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return HilbertSpec(tuple(s for s in self.subsystems if s[0] in wanted))


def _require_same(a: HilbertSpec, b: HilbertSpec) -> None:
    if a != b:
        raise IncompatibleSpaces(f"operands live on different spaces: {a.subsystems} vs {b.subsystems}")


class OperatorMatrix:
    """Sparse complex operator bound to a :class:`HilbertSpec`.

    Treat instances as immutable; arithmetic returns new objects.
    """

    __slots__ = ("spec", "matrix", "hermitian_hint")

    def __init__(self, spec: HilbertSpec, matrix, hermitian_hint: bool = False):
        mat = sp.csr_matrix(matrix, dtype=complex)
        dim = spec.total_dim
        if mat.shape != (dim, dim):
            raise IncompatibleSpaces(f"matrix shape {mat.shape} does not match dimension {dim}")
        mat.sum_duplicates()
        mat.sort_indices()
        self.spec = spec
        self.matrix = mat
        self.hermitian_hint = bool(hermitian_hint)
        if self.hermitian_hint and hermiticity_error(mat) > HERMITIAN_TOL:
            raise SqueezeError("operator flagged Hermitian is not Hermitian")

    @property
    def dim(self) -> int:
        return self.spec.total_dim

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.spec, self.matrix.conj().T, self.hermitian_hint)

    adjoint = dag

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return hermiticity_error(self.matrix) <= tol

    def __add__(self, other):
        if isinstance(other, OperatorMatrix):
            _require_same(self.spec, other.spec)
            hint = self.hermitian_hint and other.hermitian_hint
            return OperatorMatrix(self.spec, self.matrix + other.matrix, hint)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, OperatorMatrix):
            return self + (-other)
        return NotImplemented

    def __neg__(self):
        return OperatorMatrix(self.spec, -self.matrix, self.hermitian_hint)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            hint = self.hermitian_hint and np.imag(scalar) == 0
            return OperatorMatrix(self.spec, self.matrix * scalar, hint)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _require_same(self.spec, other.spec)
            return OperatorMatrix(self.spec, self.matrix @ other.matrix)
        if isinstance(other, KetState):
            return apply(self, other)
        return NotImplemented

    def __repr__(self):
        return f"OperatorMatrix({self.spec.subsystems}, nnz={self.matrix.nnz})"


def hermiticity_error(mat) -> float:
    diff = (mat - mat.conj().T)
    if sp.issparse(diff):
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(np.max(np.abs(diff))) if diff.size else 0.0


@dataclass
class KetState:
    """Pure state. ``amplitudes`` may be unnormalized (e.g. inside MCWF)."""

    spec: HilbertSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.shape[0] != self.spec.total_dim:
            raise IncompatibleSpaces(
                f"amplitude vector of length {self.amplitudes.shape[0]} on space of dimension {self.spec.total_dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "KetState":
        return KetState(self.spec, self.amplitudes / self.norm())

    def is_normalized(self, tol: float = 1e-6) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def fidelity(self, other: "KetState") -> float:
        _require_same(self.spec, other.spec)
        overlap = np.vdot(self.amplitudes, other.amplitudes)
        return float(abs(overlap) ** 2 / (self.norm() ** 2 * other.norm() ** 2))

    def to_density(self) -> "DensityOperator":
        psi = self.amplitudes / self.norm()
        return DensityOperator(self.spec, np.outer(psi, psi.conj()))


@dataclass
class DensityOperator:
    spec: HilbertSpec
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        dim = self.spec.total_dim
        if self.matrix.shape != (dim, dim):
            raise IncompatibleSpaces(f"density matrix shape {self.matrix.shape} vs dimension {dim}")

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermitian_part(self) -> "DensityOperator":
        return DensityOperator(self.spec, 0.5 * (self.matrix + self.matrix.conj().T))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-8, eig_tol: float = 1e-8) -> None:
        """Raise :class:`SqueezeError` unless this is a valid density operator."""
        herm = hermiticity_error(self.matrix)
        if herm > herm_tol:
            raise SqueezeError(f"density operator not Hermitian (error {herm:.3g})")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise SqueezeError(f"density operator trace {tr:.12g} deviates from 1")
        lo = self.min_eigenvalue()
        if lo < -eig_tol:
            raise SqueezeError(f"density operator has negative eigenvalue {lo:.3g}")


State = Union[KetState, DensityOperator]


# --- single-subsystem operators -------------------------------------------------

def annihilation_op(dim: int, label: str = "mode") -> OperatorMatrix:
    """Truncated ladder operator with ``M[n-1, n] = sqrt(n)``."""
    if int(dim) < 2:
        raise InvalidDimension(f"Fock dimension must be >= 2, got {dim}")
    dim = int(dim)
    mat = sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), 1, shape=(dim, dim), format="csr")
    return OperatorMatrix(HilbertSpec.single(label, dim), mat)


def creation_op(dim: int, label: str = "mode") -> OperatorMatrix:
    return annihilation_op(dim, label).dag()


def number_op(dim: int, label: str = "mode") -> OperatorMatrix:
    if int(dim) < 2:
        raise InvalidDimension(f"Fock dimension must be >= 2, got {dim}")
    mat = sp.diags(np.arange(int(dim), dtype=float), 0, format="csr")
    return OperatorMatrix(HilbertSpec.single(label, int(dim)), mat, hermitian_hint=True)


def identity_op(spec: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(spec, sp.identity(spec.total_dim, format="csr"), hermitian_hint=True)


ATOM_KINDS = (
    "sigma_z", "sigma_eg", "sigma_ge", "sigma_ee", "sigma_gg", "sigma_ff",
    "sigma_ef", "sigma_fe", "proj_plus", "proj_minus",
)
_F_KINDS = {"sigma_ff", "sigma_ef", "sigma_fe"}
_G, _E, _F = 0, 1, 2


def atom_op(levels: int, kind: str, label: str = QUBIT) -> OperatorMatrix:
    """Operator on the artificial atom, basis order ``(|g>, |e>[, |f>])``.

    ``sigma_xy`` is ``|x><y|``; ``proj_plus``/``proj_minus`` project on
    ``(|g> +/- |e>)/sqrt(2)``.
    """
    if levels not in (2, 3):
        raise LevelMismatch(f"atom must have 2 or 3 levels, got {levels}")
    if kind not in ATOM_KINDS:
        raise ValueError(f"unknown atom operator {kind!r}")
    if kind in _F_KINDS and levels != 3:
        raise LevelMismatch(f"{kind} needs the |f> level but the atom has {levels} levels")
    m = np.zeros((levels, levels), dtype=complex)
    if kind == "sigma_z":
        m[_E, _E], m[_G, _G] = 1.0, -1.0
    elif kind in ("proj_plus", "proj_minus"):
        s = 1.0 if kind == "proj_plus" else -1.0
        v = np.zeros(levels, dtype=complex)
        v[_G], v[_E] = 1 / np.sqrt(2), s / np.sqrt(2)
        m = np.outer(v, v.conj())
    else:
        idx = {"g": _G, "e": _E, "f": _F}
        m[idx[kind[6]], idx[kind[7]]] = 1.0
    hermitian = kind in ("sigma_z", "sigma_ee", "sigma_gg", "sigma_ff", "proj_plus", "proj_minus")
    return OperatorMatrix(HilbertSpec.single(label, levels), m, hermitian_hint=hermitian)


# --- composition ---------------------------------------------------------------

def tensor(*ops: OperatorMatrix) -> OperatorMatrix:
    """Kronecker product; the result's spec concatenates the factors' subsystems."""
    subs: tuple = ()
    mat = sp.identity(1, dtype=complex, format="csr")
    for op in ops:
        subs = subs + op.spec.subsystems
        mat = sp.kron(mat, op.matrix, format="csr")
    hint = all(op.hermitian_hint for op in ops)
    return OperatorMatrix(HilbertSpec(subs), mat, hint)


def embed(op: OperatorMatrix, spec: HilbertSpec, target: str) -> OperatorMatrix:
    """Place a single-subsystem operator on ``target``, identity elsewhere."""
    pos = spec.index(target)
    if op.dim != spec.dims[pos]:
        raise IncompatibleSpaces(
            f"operator of dimension {op.dim} cannot act on {target!r} of dimension {spec.dims[pos]}"
        )
    left = int(np.prod(spec.dims[:pos]))
    right = int(np.prod(spec.dims[pos + 1:]))
    mat = sp.kron(sp.identity(left, format="csr"), op.matrix, format="csr")
    mat = sp.kron(mat, sp.identity(right, format="csr"), format="csr")
    return OperatorMatrix(spec, mat, op.hermitian_hint)


def apply(op: OperatorMatrix, state: KetState) -> KetState:
    _require_same(op.spec, state.spec)
    return KetState(state.spec, op.matrix @ state.amplitudes)


def expectation(op: OperatorMatrix, state: State) -> complex:
    """``<op>``; kets are normalized on the fly, density operators are not."""
    _require_same(op.spec, state.spec)
    if isinstance(state, KetState):
        psi = state.amplitudes
        value = np.vdot(psi, op.matrix @ psi) / np.vdot(psi, psi).real
    else:
        value = (op.matrix.multiply(state.matrix.T)).sum()
    value = complex(value)
    if op.hermitian_hint:
        if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
            raise SqueezeError(f"expectation of Hermitian operator has imaginary part {value.imag:.3g}")
        return complex(value.real, 0.0)
    return value


def partial_trace(state: State, keep: Sequence[str]) -> DensityOperator:
    """Reduced density operator on ``keep`` (returned in the spec's order)."""
    spec = state.spec
    keep_spec = spec.select(keep)
    keep_axes = [spec.index(label) for label in keep_spec.labels]
    drop_axes = [i for i in range(len(spec.dims)) if i not in keep_axes]
    dk = keep_spec.total_dim
    if isinstance(state, KetState):
        psi = state.amplitudes.reshape(spec.dims)
        psi = np.transpose(psi, keep_axes + drop_axes).reshape(dk, -1)
        rho = psi @ psi.conj().T
        rho = rho / np.trace(rho).real
    else:
        n = len(spec.dims)
        rho_t = state.matrix.reshape(spec.dims + spec.dims)
        perm = keep_axes + drop_axes
        rho_t = np.transpose(rho_t, perm + [p + n for p in perm])
        dd = spec.total_dim // dk
        rho = np.einsum("ajbj->ab", rho_t.reshape(dk, dd, dk, dd))
    return DensityOperator(keep_spec, rho)


# --- states ----------------------------------------------------------------------

def basis_vector(dim: int, index: int) -> np.ndarray:
    if not 0 <= index < dim:
        raise InvalidDimension(f"level {index} outside a space of dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def atom_vector(levels: int, name: str) -> np.ndarray:
    """Atom state by name: ``g``, ``e``, ``f``, ``plus`` or ``minus``."""
    if name in ("plus", "minus"):
        v = np.zeros(levels, dtype=complex)
        v[_G] = 1 / np.sqrt(2)
        v[_E] = (1 if name == "plus" else -1) / np.sqrt(2)
        return v
    idx = {"g": _G, "e": _E, "f": _F}
    if name not in idx:
        raise ValueError(f"unknown atom state {name!r}")
    if name == "f" and levels != 3:
        raise LevelMismatch("|f> requested on a 2-level atom")
    return basis_vector(levels, idx[name])


def coherent_vector(dim: int, alpha: complex) -> np.ndarray:
    """Coherent-state amplitudes truncated to ``dim`` and renormalized."""
    n = np.arange(dim)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha) + 1e-300) - 0.5 * log_fact)
    if alpha == 0:
        mag = basis_vector(dim, 0).real
    v = mag * np.exp(1j * np.angle(alpha) * n)
    return (v / np.linalg.norm(v)).astype(complex)


def product_ket(spec: HilbertSpec, factors: Mapping[str, np.ndarray]) -> KetState:
    """Tensor product of per-subsystem vectors; missing subsystems default to level 0."""
    psi = np.ones(1, dtype=complex)
    for label, dim in spec.subsystems:
        vec = factors.get(label)
        vec = basis_vector(dim, 0) if vec is None else np.asarray(vec, dtype=complex)
        if vec.shape != (dim,):
            raise IncompatibleSpaces(f"factor for {label!r} has shape {vec.shape}, expected ({dim},)")
        psi = np.kron(psi, vec)
    return KetState(spec, psi)


def top_level_population(state: State, label: str, n_levels: int = 2) -> float:
    """Population in the highest ``n_levels`` Fock states of ``label`` (truncation guard)."""
    rho = partial_trace(state, [label]).matrix
    return float(np.sum(np.diag(rho).real[-n_levels:]))


# --- time-dependent operators ----------------------------------------------------

@dataclass(frozen=True)
class Phase:
    """Coefficient ``amplitude * exp(-1j * frequency * t)``."""

    amplitude: complex
    frequency: float

    def __call__(self, t: float) -> complex:
        return self.amplitude * np.exp(-1j * self.frequency * t)

    @property
    def max_abs(self) -> float:
        return abs(self.amplitude)


@dataclass(frozen=True)
class Cosine:
    """Coefficient ``amplitude * cos(frequency * t)``."""

    amplitude: complex
    frequency: float

    def __call__(self, t: float) -> complex:
        return self.amplitude * np.cos(self.frequency * t)

    @property
    def max_abs(self) -> float:
        return abs(self.amplitude)


Coefficient = Callable[[float], complex]


class TimeDependentOperator:
    """``H(t) = constant + sum_k f_k(t) * part_k`` with scalar coefficients.

    Integrators rescale the fixed parts instead of rebuilding matrices.
    Coefficients of type :class:`Phase` or :class:`Cosine` expose their
    frequency, which sets the default time step.
    """

    def __init__(self, spec: HilbertSpec, constant: OperatorMatrix | None = None,
                 terms: Sequence[tuple[OperatorMatrix, Coefficient]] = (),
                 hermitian_hint: bool = True):
        self.spec = spec
        if constant is None:
            constant = OperatorMatrix(spec, sp.csr_matrix((spec.total_dim, spec.total_dim)))
        _require_same(spec, constant.spec)
        for op, _ in terms:
            _require_same(spec, op.spec)
        self.constant = constant
        self.terms = tuple(terms)
        self.hermitian_hint = hermitian_hint

    @classmethod
    def static(cls, op: OperatorMatrix) -> "TimeDependentOperator":
        return cls(op.spec, op, (), op.hermitian_hint)

    def __call__(self, t: float) -> OperatorMatrix:
        mat = self.constant.matrix.copy()
        for op, coeff in self.terms:
            mat = mat + coeff(t) * op.matrix
        return OperatorMatrix(self.spec, mat)

    def plus_constant(self, extra: OperatorMatrix, hermitian_hint: bool = False) -> "TimeDependentOperator":
        return TimeDependentOperator(self.spec, self.constant + extra, self.terms, hermitian_hint)

    @property
    def max_frequency(self) -> float:
        freqs = [abs(getattr(c, "frequency", 0.0)) for _, c in self.terms]
        return max(freqs, default=0.0)

    def norm_bound(self) -> float:
        """Row-sum (Gershgorin) bound on ``max_t ||H(t)||``."""
        acc = abs(self.constant.matrix)
        for op, coeff in self.terms:
            amp = getattr(coeff, "max_abs", None)
            if amp is None:
                amp = max(abs(coeff(t)) for t in np.linspace(0.0, 10.0, 64))
            acc = acc + amp * abs(op.matrix)
        return float(np.max(np.asarray(acc.sum(axis=1)))) if acc.nnz else 0.0

    def compile(self) -> "CompiledOperator":
        return CompiledOperator(self)


class CompiledOperator:
    """Union-sparsity form of a :class:`TimeDependentOperator` for fast evaluation.

    :meth:`at` overwrites one shared CSR matrix in place; use the result
    before the next call. Not thread-safe; compile once per worker.
    """

    def __init__(self, top: TimeDependentOperator):
        dim = top.spec.total_dim
        parts = [top.constant.matrix] + [op.matrix for op, _ in top.terms]
        coos = [p.tocoo() for p in parts]
        lins = [c.row.astype(np.int64) * dim + c.col for c in coos]
        union = np.unique(np.concatenate(lins)) if lins else np.zeros(0, np.int64)
        rows, cols = union // dim, union % dim
        indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=dim))])
        stacked = np.zeros((len(parts), union.size), dtype=complex)
        for k, (coo, lin) in enumerate(zip(coos, lins)):
            np.add.at(stacked[k], np.searchsorted(union, lin), coo.data)
        self.coefficients = [c for _, c in top.terms]
        self.stacked = stacked
        self._coef = np.ones(len(parts), dtype=complex)
        self.matrix = sp.csr_matrix((stacked[0].copy(), cols.astype(np.int32), indptr.astype(np.int32)),
                                    shape=(dim, dim))
        self._cached_t = None
        self.static = len(parts) == 1

    def at(self, t: float) -> sp.csr_matrix:
        if self.static or t == self._cached_t:
            return self.matrix
        for k, coeff in enumerate(self.coefficients, start=1):
            self._coef[k] = coeff(t)
        self.matrix.data = self._coef @ self.stacked
        self._cached_t = t
        return self.matrix
