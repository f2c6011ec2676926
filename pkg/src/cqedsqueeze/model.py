"""Physical parameters and Hamiltonians of the driven qubit + two-resonator setup.

Every frequency is an angular frequency. The builders do not care about
units, but the scenario layer works in units of the coupling ``g``.

Hamiltonian ladder, from most to least complete:

* :func:`build_h_full` - lab frame, three-level atom, no rotating-wave approximation;
* :func:`build_h_rwa` - two-level atom after the rotating-wave approximation;
* :func:`build_v_i` - the same in the interaction picture of the bare energies;
* :func:`build_h_eff` - dispersive second-order effective Hamiltonian;
* :func:`build_h_minus` - ideal two-mode squeezing generator ``lam a b + h.c.``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DegenerateDetuning, IncompatibleSpaces, LevelMismatch, NeedsLargerSpace
from .fockspace import (
    MODE_A,
    MODE_B,
    QUBIT,
    Cosine,
    HilbertSpec,
    OperatorMatrix,
    Phase,
    TimeDependentOperator,
    annihilation_op,
    atom_op,
    embed,
    number_op,
)


@dataclass(frozen=True)
class ModelParams:
    """Inputs of the full model. ``omega_d`` defaults to (and must equal) ``omega_0``."""

    g_a: complex = 1.0
    g_b: complex = 1.0
    omega_0: float = 500.0
    omega_ef: float = 2500.0
    Omega: complex = 50.0
    Delta: float = 90.0
    omega_d: float | None = None
    qubit_levels: int = 2
    theta: float = math.pi / 4

    def __post_init__(self):
        if self.omega_d is None:
            object.__setattr__(self, "omega_d", float(self.omega_0))
        if self.omega_d != self.omega_0:
            raise ValueError(f"the drive must be resonant: omega_d={self.omega_d} != omega_0={self.omega_0}")
        if self.qubit_levels not in (2, 3):
            raise LevelMismatch(f"qubit_levels must be 2 or 3, got {self.qubit_levels}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    eta: float
    chi_a: float
    chi_b: float
    lam: complex
    delta: float
    delta_a: float
    delta_b: float
    omega_a: float
    omega_b: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _drive_splitting(Omega: complex) -> float:
    return 2.0 * (Omega.real if np.imag(Omega) == 0 else abs(Omega))


def derive(params: ModelParams) -> DerivedParams:
    """Derived chain: ``eta = 2 Omega - Delta``, Stark shifts, ``lam`` and the tuned ``delta``."""
    eta = _drive_splitting(complex(params.Omega)) - params.Delta
    if eta == 0:
        raise DegenerateDetuning("2*Omega == Delta: the effective coupling diverges")
    chi_a = abs(params.g_a) ** 2 / (4 * eta)
    chi_b = abs(params.g_b) ** 2 / (4 * eta)
    lam = params.g_a * params.g_b / (4 * eta)
    if np.imag(lam) == 0:
        lam = float(np.real(lam))
    delta = -(chi_a + chi_b)
    delta_a = params.Delta
    delta_b = -params.Delta - delta
    return DerivedParams(
        eta=eta, chi_a=chi_a, chi_b=chi_b, lam=lam, delta=delta,
        delta_a=delta_a, delta_b=delta_b,
        omega_a=params.omega_0 + delta_a, omega_b=params.omega_0 + delta_b,
    )


# --- regime validation --------------------------------------------------------------

@dataclass(frozen=True)
class RegimeCheck:
    name: str
    left: float
    right: float
    ratio: float
    threshold: float
    passed: bool
    note: str = ""


@dataclass
class RegimeReport:
    checks: list[RegimeCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[RegimeCheck]:
        return [c for c in self.checks if not c.passed]

    def warnings(self) -> list[str]:
        return [
            f"regime check {c.name} failed: ratio {c.ratio:.3g} < {c.threshold:g}"
            + (f" ({c.note})" if c.note else "")
            for c in self.failures()
        ]

    def to_list(self) -> list[dict]:
        return [asdict(c) for c in self.checks]


def _check(name, left, right, threshold, note=""):
    left, right = abs(float(left)), abs(float(right))
    ratio = math.inf if right == 0 else left / right
    return RegimeCheck(name, left, right, ratio, threshold, ratio >= threshold, note)


def validate_regime(params: ModelParams, derived: DerivedParams | None = None,
                    threshold: float = 3.0, drive_threshold: float = 7.0,
                    coupling_threshold: float = 10.0) -> RegimeReport:
    """Evaluate the approximations behind the effective model.

    A check passes when ``|left| / |right| >= threshold``. The resonant
    drive (``omega_d = omega_0``) has no detuning to compare with, so its
    rotating-wave check compares ``omega_0 + omega_d`` against ``2 Omega``
    under the stricter ``drive_threshold``. Transitions out of ``|e>`` to
    ``|f>`` are off-resonant for both rotating and counter-rotating terms
    and are checked as ``min(|w_ef - w_x|, w_ef + w_x) >> |g_x|``.
    """
    d = derive(params) if derived is None else derived
    g_d = 2 * abs(params.Omega)
    fields = {
        "a": (d.omega_a, abs(params.g_a)),
        "b": (d.omega_b, abs(params.g_b)),
        "d": (params.omega_d, g_d),
    }
    checks = []
    w0 = params.omega_0
    for x, (wx, gx) in fields.items():
        if x == "d":
            checks.append(_check("rwa[0,d]", w0 + wx, gx, drive_threshold,
                                 "strong resonant drive: counter-rotating drive terms not negligible"))
            continue
        checks.append(_check(f"rwa[0,{x}]", w0 + wx, w0 - wx, threshold))
        checks.append(_check(f"detuning[0,{x}]", w0 - wx, gx, threshold))
    wef = params.omega_ef
    for x, (wx, gx) in fields.items():
        checks.append(_check(f"offresonant[ef,{x}]", min(abs(wef - wx), wef + wx), gx, threshold))
    checks.append(_check("dressed_gap", params.Delta + _drive_splitting(complex(params.Omega)), d.eta, threshold))
    checks.append(_check("eta_vs_g", d.eta, max(abs(params.g_a), abs(params.g_b)), threshold))
    checks.append(_check("small_delta", params.Delta, d.delta, threshold))
    checks.append(_check("anharmonicity", wef, w0, threshold,
                         "third level too close: strong drive leaks into |f>"))
    for x in ("a", "b"):
        wx, gx = fields[x]
        checks.append(_check(f"not_ultrastrong[{x}]", max(w0, wx), gx, coupling_threshold))
    return RegimeReport(checks)


# --- Hilbert spaces ----------------------------------------------------------------

def system_spec(n_a: int, n_b: int | None = None, qubit_levels: int = 2) -> HilbertSpec:
    """Full space ``(qubit, a, b)``."""
    n_b = n_a if n_b is None else n_b
    return HilbertSpec(((QUBIT, qubit_levels), (MODE_A, n_a), (MODE_B, n_b)))


def mode_spec(n_a: int, n_b: int | None = None) -> HilbertSpec:
    n_b = n_a if n_b is None else n_b
    return HilbertSpec(((MODE_A, n_a), (MODE_B, n_b)))


class _Ops:
    """Embedded operators for one spec (built lazily, cached)."""

    def __init__(self, spec: HilbertSpec):
        self.spec = spec
        self._cache = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def mode(self, label):
        return self._get(label, lambda: embed(annihilation_op(self.spec.dim_of(label), label), self.spec, label))

    def num(self, label):
        return self._get("n" + label, lambda: embed(number_op(self.spec.dim_of(label), label), self.spec, label))

    def atom(self, kind):
        levels = self.spec.dim_of(QUBIT)
        return self._get(kind, lambda: embed(atom_op(levels, kind), self.spec, QUBIT))

    @property
    def a(self):
        return self.mode(MODE_A)

    @property
    def b(self):
        return self.mode(MODE_B)


def _levels(spec: HilbertSpec) -> int:
    if QUBIT not in spec:
        raise IncompatibleSpaces("this Hamiltonian needs a qubit subsystem")
    return spec.dim_of(QUBIT)


def _require_levels(spec: HilbertSpec, levels: int) -> None:
    if _levels(spec) != levels:
        raise LevelMismatch(f"Hamiltonian needs a {levels}-level atom, spec has {_levels(spec)}")


def _bare_modes(o: _Ops, d: DerivedParams) -> OperatorMatrix:
    return d.omega_a * o.num(MODE_A) + d.omega_b * o.num(MODE_B)


def build_h_full(params: ModelParams, spec: HilbertSpec) -> TimeDependentOperator:
    """Lab-frame three-level Hamiltonian without the rotating-wave approximation.

    The mode and drive couplings act on both the g-e and e-f transitions with
    equal strength. Complex couplings enter as ``g a + g* a^dag`` so the
    operator stays Hermitian; for real values this is ``g (a + a^dag)``.
    """
    _require_levels(spec, 3)
    d = derive(params)
    o = _Ops(spec)
    h0 = (_bare_modes(o, d) + (params.omega_0 / 2) * o.atom("sigma_z")
          + (params.omega_0 / 2 + params.omega_ef) * o.atom("sigma_ff"))
    x_atom = o.atom("sigma_ge") + o.atom("sigma_eg") + o.atom("sigma_ef") + o.atom("sigma_fe")
    field_op = (params.g_a * o.a + np.conj(params.g_a) * o.a.dag()
                + params.g_b * o.b + np.conj(params.g_b) * o.b.dag())
    constant = h0 + field_op @ x_atom
    x_atom = OperatorMatrix(spec, x_atom.matrix, hermitian_hint=True)
    Omega = complex(params.Omega)
    if Omega.imag == 0:
        terms = [(x_atom, Cosine(2 * Omega.real, params.omega_d))]
    else:
        terms = [(x_atom, Phase(Omega, params.omega_d)), (x_atom, Phase(Omega.conjugate(), -params.omega_d))]
    return TimeDependentOperator(spec, OperatorMatrix(spec, constant.matrix, True), terms)


def build_h_rwa(params: ModelParams, spec: HilbertSpec) -> TimeDependentOperator:
    """Two-level lab-frame Hamiltonian ``H_0 + H_I(t)`` after the rotating-wave approximation."""
    _require_levels(spec, 2)
    d = derive(params)
    o = _Ops(spec)
    seg, sge = o.atom("sigma_eg"), o.atom("sigma_ge")
    h0 = _bare_modes(o, d) + (params.omega_0 / 2) * o.atom("sigma_z")
    coupling = (params.g_a * o.a + params.g_b * o.b) @ seg
    constant = h0 + coupling + coupling.dag()
    Omega = complex(params.Omega)
    terms = [(seg, Phase(Omega, params.omega_d)), (sge, Phase(Omega.conjugate(), -params.omega_d))]
    return TimeDependentOperator(spec, OperatorMatrix(spec, constant.matrix, True), terms)


def build_v_i(params: ModelParams, derived: DerivedParams, spec: HilbertSpec) -> TimeDependentOperator:
    """Interaction-picture coupling ``(g_a e^{-i d_a t} a + g_b e^{-i d_b t} b + Omega) s_eg + h.c.``."""
    _require_levels(spec, 2)
    o = _Ops(spec)
    seg, sge = o.atom("sigma_eg"), o.atom("sigma_ge")
    Omega = complex(params.Omega)
    constant = Omega * seg + Omega.conjugate() * sge
    terms = [
        (o.a @ seg, Phase(params.g_a, derived.delta_a)),
        (o.a.dag() @ sge, Phase(np.conj(params.g_a), -derived.delta_a)),
        (o.b @ seg, Phase(params.g_b, derived.delta_b)),
        (o.b.dag() @ sge, Phase(np.conj(params.g_b), -derived.delta_b)),
    ]
    return TimeDependentOperator(spec, OperatorMatrix(spec, constant.matrix, True), terms)


def build_h_eff(params: ModelParams, derived: DerivedParams, spec: HilbertSpec) -> TimeDependentOperator:
    """Dispersive effective Hamiltonian in the dressed-qubit basis ``|+>, |->``.

    ``a a^dag`` and ``b b^dag`` are taken literally on the truncated space.
    """
    _require_levels(spec, 2)
    d = derived
    o = _Ops(spec)
    a, b = o.a, o.b
    pp, mm = o.atom("proj_plus"), o.atom("proj_minus")
    constant = ((d.chi_a * (a @ a.dag()) + d.chi_b * (b.dag() @ b)) @ pp
                - (d.chi_a * (a.dag() @ a) + d.chi_b * (b @ b.dag())) @ mm)
    sign = mm - pp
    lam = complex(d.lam)
    terms = [
        ((a @ b) @ sign, Phase(lam, -d.delta)),
        ((a.dag() @ b.dag()) @ sign, Phase(lam.conjugate(), d.delta)),
    ]
    return TimeDependentOperator(spec, OperatorMatrix(spec, constant.matrix, True), terms)


def build_h_minus(derived: DerivedParams, spec: HilbertSpec) -> OperatorMatrix:
    """Ideal squeezing generator ``lam a b + lam* a^dag b^dag`` on the modes of ``spec``."""
    o = _Ops(spec)
    lam = complex(derived.lam)
    ab = o.a @ o.b
    h = lam * ab + lam.conjugate() * ab.dag()
    return OperatorMatrix(spec, h.matrix, hermitian_hint=True)


def squeeze_operator(zeta: complex, spec: HilbertSpec, leak_tol: float | None = 1e-6) -> OperatorMatrix:
    """Two-mode squeezing operator ``S(zeta) = exp(zeta a b - zeta* a^dag b^dag)``.

    With this sign convention ``S(-1j * lam * tau) = exp(-1j * tau * H_minus)``.
    Dense matrix exponential; only meant for oracle-sized spaces. Raises
    :class:`NeedsLargerSpace` when ``S|0,0>`` puts more than ``leak_tol`` into
    the top two Fock levels of either mode (pass ``None`` to skip).
    """
    o = _Ops(spec)
    ab = (o.a @ o.b).toarray()
    gen = zeta * ab - np.conj(zeta) * ab.conj().T
    s = sla.expm(gen)
    if leak_tol is not None:
        psi = s[:, 0]
        for label in (MODE_A, MODE_B):
            leak = _top_population(np.abs(psi) ** 2, spec, label)
            if leak > leak_tol:
                raise NeedsLargerSpace(
                    f"S(zeta)|00> leaks {leak:.2e} into the top Fock levels of mode {label}; increase the truncation"
                )
    return OperatorMatrix(spec, sp.csr_matrix(s))


def _top_population(prob: np.ndarray, spec: HilbertSpec, label: str, n_levels: int = 2) -> float:
    p = prob.reshape(spec.dims)
    axis = spec.index(label)
    marginal = p.sum(axis=tuple(i for i in range(p.ndim) if i != axis))
    return float(marginal[-n_levels:].sum())


def frame_u_drive(params: ModelParams, t: float, spec: HilbertSpec) -> OperatorMatrix:
    """``U = exp[-i (Omega s_eg + Omega* s_ge) t]`` embedded in ``spec``."""
    levels = _levels(spec)
    Omega = complex(params.Omega)
    gen = (Omega * atom_op(levels, "sigma_eg").toarray() + Omega.conjugate() * atom_op(levels, "sigma_ge").toarray())
    u = sla.expm(-1j * gen * t)
    local = OperatorMatrix(HilbertSpec.single(QUBIT, levels), u)
    return embed(local, spec, QUBIT)


def frame_u_minus(derived: DerivedParams, t: float, spec: HilbertSpec) -> OperatorMatrix:
    """Diagonal ``U_- = exp(i chi_a n_a t + i chi_b n_b t)`` embedded in ``spec``."""
    phase = np.zeros(spec.total_dim)
    idx = np.indices(spec.dims).reshape(len(spec.dims), -1)
    phase += derived.chi_a * idx[spec.index(MODE_A)] + derived.chi_b * idx[spec.index(MODE_B)]
    return OperatorMatrix(spec, sp.diags(np.exp(1j * phase * t), format="csr"))
