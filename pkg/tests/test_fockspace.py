from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqedsqueeze.errors import IncompatibleSpaces, InvalidDimension, LevelMismatch, SqueezeError
from cqedsqueeze.fockspace import (
    Cosine,
    DensityOperator,
    HilbertSpec,
    KetState,
    OperatorMatrix,
    Phase,
    TimeDependentOperator,
    annihilation_op,
    apply,
    atom_op,
    atom_vector,
    basis_vector,
    coherent_vector,
    creation_op,
    embed,
    expectation,
    identity_op,
    number_op,
    partial_trace,
    product_ket,
    tensor,
    top_level_population,
)
from cqedsqueeze.model import mode_spec, system_spec


def _nonzeros(op):
    coo = op.matrix.tocoo()
    return {(int(i), int(j)): complex(v) for i, j, v in zip(coo.row, coo.col, coo.data) if v != 0}


def _random_op(rng, dim):
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


def _tmss_vector(r, n):
    """Independent oracle: amplitudes tanh^k r / cosh r on |k,k> written out by hand."""
    psi = np.zeros((n, n), dtype=complex)
    for k in range(n):
        psi[k, k] = math.tanh(r) ** k / math.cosh(r)
    return psi.reshape(-1)


class TestHilbertSpec:
    def test_total_dim_is_product(self):
        spec = system_spec(3, 4)
        assert spec.dims == (2, 3, 4)
        assert spec.total_dim == 24
        assert spec.labels == ("qubit", "a", "b")

    @pytest.mark.parametrize("subs", [(("a", 1),), (("a", 3), ("a", 3)), ()])
    def test_invalid(self, subs):
        with pytest.raises(InvalidDimension):
            HilbertSpec(subs)

    def test_unknown_label(self):
        with pytest.raises(IncompatibleSpaces):
            mode_spec(3).index("qubit")

    def test_select_keeps_order(self):
        spec = system_spec(3)
        assert spec.select(["b", "qubit"]).labels == ("qubit", "b")


class TestLadder:
    def test_dim3_entries(self):
        nz = _nonzeros(annihilation_op(3))
        assert set(nz) == {(0, 1), (1, 2)}
        assert nz[(0, 1)] == 1 and nz[(1, 2)] == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_dim2_entries(self):
        assert _nonzeros(annihilation_op(2)) == {(0, 1): 1}

    def test_lowers_one(self):
        spec = HilbertSpec.single("mode", 4)
        out = apply(annihilation_op(4), KetState(spec, basis_vector(4, 1)))
        assert np.allclose(out.amplitudes, basis_vector(4, 0))

    @pytest.mark.parametrize("dim", [0, 1])
    def test_invalid_dim(self, dim):
        with pytest.raises(InvalidDimension):
            annihilation_op(dim)
        with pytest.raises(InvalidDimension):
            number_op(dim)

    @given(st.integers(2, 25))
    def test_commutator_is_one_below_top(self, dim):
        a = annihilation_op(dim).toarray()
        comm = a @ a.conj().T - a.conj().T @ a
        # exact up to the rounding of sqrt(n)**2
        assert np.max(np.abs(comm[:-1, :-1] - np.eye(dim - 1))) <= 4 * dim * np.finfo(float).eps
        # truncation artifact lives in the last row/column only
        assert comm[-1, -1] == pytest.approx(-(dim - 1))

    def test_number_on_fock_one(self):
        spec = HilbertSpec.single("mode", 5)
        assert expectation(number_op(5), KetState(spec, basis_vector(5, 1))) == 1

    def test_creation_is_adjoint(self):
        assert np.array_equal(creation_op(5).toarray(), annihilation_op(5).toarray().T)


class TestAtom:
    def test_sigma_z(self):
        assert np.array_equal(atom_op(2, "sigma_z").toarray(), np.diag([-1, 1]))

    def test_sigma_ef(self):
        assert _nonzeros(atom_op(3, "sigma_ef")) == {(1, 2): 1}

    def test_proj_minus(self):
        assert np.allclose(atom_op(2, "proj_minus").toarray(), [[0.5, -0.5], [-0.5, 0.5]])

    def test_projectors_resolve_identity(self):
        total = atom_op(2, "proj_plus") + atom_op(2, "proj_minus")
        assert np.allclose(total.toarray(), np.eye(2))

    @pytest.mark.parametrize("kind", ["sigma_ff", "sigma_ef", "sigma_fe"])
    def test_f_level_needs_three(self, kind):
        with pytest.raises(LevelMismatch):
            atom_op(2, kind)

    def test_bad_levels(self):
        with pytest.raises(LevelMismatch):
            atom_op(4, "sigma_z")

    def test_raising(self):
        e = atom_op(3, "sigma_eg").toarray() @ atom_vector(3, "g")
        assert np.array_equal(e, atom_vector(3, "e"))

    def test_minus_state_is_eigenvector(self):
        v = atom_vector(2, "minus")
        assert np.allclose(atom_op(2, "proj_minus").toarray() @ v, v)


class TestComposition:
    def test_embed_dimension(self):
        spec = HilbertSpec((("qubit", 2), ("a", 3), ("b", 3)))
        assert embed(annihilation_op(3, "a"), spec, "a").dim == 18

    def test_embed_identity(self):
        spec = system_spec(3)
        e = embed(identity_op(HilbertSpec.single("a", 3)), spec, "a")
        assert np.array_equal(e.toarray(), np.eye(18))

    def test_disjoint_commute(self):
        spec = system_spec(4)
        a = embed(annihilation_op(4, "a"), spec, "a")
        b = embed(annihilation_op(4, "b"), spec, "b")
        assert abs((a @ b - b @ a).matrix).max() == 0

    def test_embed_ordering_matches_kron(self):
        spec = system_spec(3, 4)
        got = embed(annihilation_op(3, "a"), spec, "a").toarray()
        want = np.kron(np.kron(np.eye(2), annihilation_op(3).toarray()), np.eye(4))
        assert np.array_equal(got, want)

    def test_embed_errors(self):
        spec = system_spec(3)
        with pytest.raises(IncompatibleSpaces):
            embed(annihilation_op(4), spec, "a")
        with pytest.raises(IncompatibleSpaces):
            embed(annihilation_op(3), spec, "c")

    @given(st.integers(2, 5), st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
    def test_embed_preserves_spectrum(self, d_target, d_other, seed):
        rng = np.random.default_rng(seed)
        m = _random_op(rng, d_target)
        m = m + m.conj().T
        spec = HilbertSpec((("x", d_other), ("y", d_target)))
        op = OperatorMatrix(HilbertSpec.single("y", d_target), m, hermitian_hint=True)
        got = np.sort(np.linalg.eigvalsh(embed(op, spec, "y").toarray()))
        want = np.sort(np.repeat(np.linalg.eigvalsh(m), d_other))
        assert np.allclose(got, want, atol=1e-10)

    @given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
    def test_tensor_factorizes(self, da, db, seed):
        rng = np.random.default_rng(seed)
        A = OperatorMatrix(HilbertSpec.single("a", da), _random_op(rng, da))
        B = OperatorMatrix(HilbertSpec.single("b", db), _random_op(rng, db))
        x = rng.normal(size=da) + 1j * rng.normal(size=da)
        y = rng.normal(size=db) + 1j * rng.normal(size=db)
        AB = tensor(A, B)
        out = apply(AB, KetState(AB.spec, np.kron(x, y))).amplitudes
        want = np.kron(A.toarray() @ x, B.toarray() @ y)
        assert np.max(np.abs(out - want)) <= 1e-12 * max(1.0, np.max(np.abs(want)))

    def test_spec_mismatch(self):
        a3 = annihilation_op(3, "a")
        a4 = annihilation_op(4, "a")
        with pytest.raises(IncompatibleSpaces):
            a3 + a4
        with pytest.raises(IncompatibleSpaces):
            a3 @ a4
        with pytest.raises(IncompatibleSpaces):
            expectation(a3, KetState(HilbertSpec.single("a", 4), basis_vector(4, 0)))

    def test_arithmetic(self):
        a = annihilation_op(4)
        assert np.allclose((2 * a - a / 2).toarray(), 1.5 * a.toarray())
        assert np.allclose((-a).toarray(), -a.toarray())
        assert (a.dag() @ a).is_hermitian()

    def test_hermitian_hint_is_checked(self):
        with pytest.raises(SqueezeError):
            OperatorMatrix(HilbertSpec.single("a", 3), annihilation_op(3).matrix, hermitian_hint=True)


class TestExpectationAndTrace:
    def test_tmss_photon_number(self):
        spec = mode_spec(70)
        psi = KetState(spec, _tmss_vector(1.0, 70))
        n_a = embed(number_op(70, "a"), spec, "a")
        assert expectation(n_a, psi).real == pytest.approx(math.sinh(1.0) ** 2, abs=1e-10)
        assert math.sinh(1.0) ** 2 == pytest.approx(1.3811, abs=1e-4)

    def test_partial_trace_product(self):
        spec = system_spec(3)
        ket = product_ket(spec, {"qubit": atom_vector(2, "minus")})
        red = partial_trace(ket, ["a", "b"])
        want = np.zeros((9, 9))
        want[0, 0] = 1
        assert red.spec.labels == ("a", "b")
        assert np.allclose(red.matrix, want)
        red.validate()

    @given(st.integers(0, 2 ** 32 - 1))
    def test_partial_trace_preserves_trace(self, seed):
        rng = np.random.default_rng(seed)
        spec = system_spec(3, 2)
        v = rng.normal(size=spec.total_dim) + 1j * rng.normal(size=spec.total_dim)
        rho = DensityOperator(spec, np.outer(v, v.conj()) / np.vdot(v, v).real)
        for keep in (["qubit"], ["a", "b"], ["b"]):
            red = partial_trace(rho, keep)
            assert abs(red.trace() - 1) <= 1e-12
            assert red.min_eigenvalue() > -1e-12
        ket_red = partial_trace(KetState(spec, v), ["a"])
        assert np.allclose(ket_red.matrix, partial_trace(rho, ["a"]).matrix, atol=1e-12)

    def test_coherent_moments(self):
        spec = HilbertSpec.single("mode", 40)
        alpha = 0.8 - 0.5j
        psi = KetState(spec, coherent_vector(40, alpha))
        assert expectation(annihilation_op(40), psi) == pytest.approx(alpha, abs=1e-12)
        assert expectation(number_op(40), psi).real == pytest.approx(abs(alpha) ** 2, abs=1e-12)

    def test_hermitian_expectation_real(self):
        spec = HilbertSpec.single("mode", 6)
        psi = KetState(spec, coherent_vector(6, 0.3j))
        val = expectation(number_op(6), psi)
        assert val.imag == 0

    def test_density_validation(self):
        spec = HilbertSpec.single("mode", 2)
        with pytest.raises(SqueezeError):
            DensityOperator(spec, np.diag([0.5, 0.4])).validate()
        with pytest.raises(SqueezeError):
            DensityOperator(spec, np.diag([1.2, -0.2])).validate()
        with pytest.raises(SqueezeError):
            DensityOperator(spec, np.array([[0.5, 0.1], [0.2, 0.5]])).validate()
        DensityOperator(spec, np.diag([0.3, 0.7])).validate()

    def test_top_level_population(self):
        spec = mode_spec(5)
        ket = product_ket(spec, {"a": basis_vector(5, 4)})
        assert top_level_population(ket, "a") == 1.0
        assert top_level_population(ket, "b") == 0.0

    def test_ket_helpers(self):
        spec = HilbertSpec.single("mode", 3)
        k = KetState(spec, [3, 4j, 0])
        assert k.norm() == 5
        assert k.normalized().is_normalized()
        assert not k.is_normalized()
        assert k.fidelity(KetState(spec, [0, 1, 0])) == pytest.approx(16 / 25)
        with pytest.raises(IncompatibleSpaces):
            KetState(spec, [1, 0])


class TestTimeDependent:
    def _op(self):
        spec = HilbertSpec.single("mode", 4)
        a = annihilation_op(4)
        n = number_op(4)
        return TimeDependentOperator(spec, n, [(a, Phase(0.3, 2.0)), (a.dag(), Phase(0.3, -2.0)),
                                               (a + a.dag(), Cosine(0.5, 7.0))])

    @given(st.floats(-20, 20))
    def test_call_and_compiled_agree(self, t):
        H = self._op()
        direct = H(t).toarray()
        a = annihilation_op(4).toarray()
        want = number_op(4).toarray() + 0.3 * np.exp(-2j * t) * a + 0.3 * np.exp(2j * t) * a.T \
            + 0.5 * math.cos(7 * t) * (a + a.T)
        assert np.allclose(direct, want, atol=1e-14)
        assert np.allclose(H.compile().at(t).toarray(), want, atol=1e-14)
        assert H(t).is_hermitian()

    def test_frequency_and_bound(self):
        H = self._op()
        assert H.max_frequency == 7.0
        true_norm = max(np.linalg.norm(H(t).toarray(), 2) for t in np.linspace(0, 3, 50))
        assert H.norm_bound() >= true_norm

    def test_static(self):
        n = number_op(3)
        H = TimeDependentOperator.static(n)
        assert H.compile().static
        assert np.array_equal(H(1.3).toarray(), n.toarray())
