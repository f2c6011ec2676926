from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqedsqueeze.errors import IncompatibleSpaces, InvalidVariance
from cqedsqueeze.fockspace import (
    HilbertSpec,
    KetState,
    apply,
    atom_vector,
    basis_vector,
    coherent_vector,
    expectation,
    partial_trace,
    product_ket,
)
from cqedsqueeze.model import ModelParams, build_h_minus, derive, frame_u_minus, mode_spec, squeeze_operator, system_spec
from cqedsqueeze.observables import (
    DIAGNOSTIC_NAMES,
    SqueezingRecord,
    diagnostics,
    ensemble_variance,
    epr_variance,
    ideal_tmss,
    ideal_variance,
    is_entangled,
    moments,
    optimize_theta,
    quadrature_ops,
    rotate_moments,
    squeezing_db,
    variance_from_db,
    variance_from_moments,
)
from cqedsqueeze.solvers import TimeGrid, propagate_schrodinger

angles = st.floats(min_value=-2 * math.pi, max_value=2 * math.pi, allow_nan=False)
LAM = 1 / 40


def _vacuum(ms):
    return product_ket(ms, {"a": basis_vector(ms.dim_of("a"), 0), "b": basis_vector(ms.dim_of("b"), 0)})


def _random_ket(seed, ms):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=ms.total_dim) + 1j * rng.normal(size=ms.total_dim)
    return KetState(ms, v / np.linalg.norm(v))


def _brute_variance(state, theta):
    spec = state.spec
    xa, pa = quadrature_ops(spec, "a", theta)
    xb, pb = quadrature_ops(spec, "b", theta)
    u, v = xa + xb, pa - pb
    var = 0.0
    for q in (u, v):
        var += (expectation(q @ q, state) - expectation(q, state) ** 2).real
    return var


@pytest.fixture(scope="module")
def tmss():
    ms = mode_spec(50)
    return ms, KetState(ms, squeeze_operator(-1j * 1.0, ms).toarray()[:, 0])


# --- quadratures ----------------------------------------------------------------------

def test_quadratures_at_zero_angle():
    ms = mode_spec(5)
    x, p = quadrature_ops(ms, "a", 0.0)
    a = quadrature_ops(ms, "a", 0.0)
    from cqedsqueeze.fockspace import annihilation_op, embed

    op = embed(annihilation_op(5, "a"), ms, "a")
    assert np.allclose(x.toarray(), (op + op.dag()).toarray() / math.sqrt(2))
    assert x.is_hermitian() and p.is_hermitian() and a[0].is_hermitian()


def test_quadrature_phase_identity():
    ms = mode_spec(5)
    x_half, _ = quadrature_ops(ms, "b", math.pi / 2)
    _, p0 = quadrature_ops(ms, "b", 0.0)
    assert np.allclose(x_half.toarray(), p0.toarray(), atol=1e-15)


@given(theta=angles)
def test_vacuum_quadrature_variance(theta):
    ms = mode_spec(4)
    x, p = quadrature_ops(ms, "a", theta)
    vac = _vacuum(ms)
    assert expectation(x @ x, vac).real == pytest.approx(0.5, abs=1e-14)
    assert expectation(p @ p, vac).real == pytest.approx(0.5, abs=1e-14)


def test_canonical_commutator_below_top_level():
    N = 6
    ms = mode_spec(N)
    x, p = quadrature_ops(ms, "a", 0.3)
    c = (x @ p - p @ x).toarray()
    keep = np.repeat(np.arange(N) < N - 1, N)
    assert np.allclose(c[np.ix_(keep, keep)], 1j * np.eye(keep.sum()), atol=1e-13)


def test_quadrature_unknown_mode():
    with pytest.raises(IncompatibleSpaces):
        quadrature_ops(mode_spec(3), "c", 0.0)


# --- EPR variance -----------------------------------------------------------------------

@given(theta=angles)
def test_vacuum_variance_is_two(theta):
    assert epr_variance(_vacuum(mode_spec(3)), theta) == pytest.approx(2.0, abs=1e-14)


@given(alpha=st.complex_numbers(max_magnitude=1.5), beta=st.complex_numbers(max_magnitude=1.5), theta=angles)
def test_coherent_product_variance_is_two(alpha, beta, theta):
    ms = mode_spec(30)
    psi = product_ket(ms, {"a": coherent_vector(30, alpha), "b": coherent_vector(30, beta)})
    assert epr_variance(psi, theta) == pytest.approx(2.0, abs=1e-10)


def test_tmss_squeezed_and_antisqueezed(tmss):
    ms, psi = tmss
    assert epr_variance(psi, math.pi / 4) == pytest.approx(2 * math.exp(-2), abs=1e-8)
    assert epr_variance(psi, math.pi / 4) == pytest.approx(0.27067, abs=1e-5)
    assert epr_variance(psi, 3 * math.pi / 4) == pytest.approx(2 * math.exp(2), abs=1e-6)
    assert epr_variance(psi, 3 * math.pi / 4) == pytest.approx(14.778, abs=1e-3)


def test_analytic_tmss_matches_squeeze_operator(tmss):
    ms, psi = tmss
    assert ideal_tmss(-1j * 1.0, ms).fidelity(psi) >= 1 - 1e-12


@given(seed=st.integers(0, 10_000), theta=angles)
def test_moment_formula_matches_quadrature_operators(seed, theta):
    psi = _random_ket(seed, mode_spec(4))
    assert epr_variance(psi, theta) == pytest.approx(_brute_variance(psi, theta), abs=1e-12)


@given(seed=st.integers(0, 10_000), theta=angles)
def test_variance_positive(seed, theta):
    assert epr_variance(_random_ket(seed, mode_spec(4)), theta) > 0


@given(seed=st.integers(0, 10_000), theta=angles)
def test_mode_exchange_symmetry(seed, theta):
    ms = mode_spec(4)
    psi = _random_ket(seed, ms)
    swapped = KetState(ms, psi.amplitudes.reshape(4, 4).T.reshape(-1))
    assert epr_variance(swapped, theta) == pytest.approx(epr_variance(psi, theta), abs=1e-12)


def test_qubit_is_traced_out():
    spec = system_spec(4)
    rng = np.random.default_rng(3)
    v = rng.normal(size=spec.total_dim) + 1j * rng.normal(size=spec.total_dim)
    psi = KetState(spec, v / np.linalg.norm(v))
    reduced = partial_trace(psi, ["a", "b"])
    for theta in (0.0, 0.4, 2.0):
        assert epr_variance(psi, theta) == pytest.approx(epr_variance(reduced, theta), abs=1e-12)
        assert epr_variance(psi.to_density(), theta) == pytest.approx(epr_variance(psi, theta), abs=1e-12)


def test_variance_needs_two_modes():
    with pytest.raises(IncompatibleSpaces):
        epr_variance(KetState(HilbertSpec.single("a", 3), basis_vector(3, 0)), 0.0)


def test_separable_states_not_entangled():
    ms = mode_spec(12)
    states = [_vacuum(ms)]
    for na, nb in ((1, 0), (2, 3), (5, 5)):
        states.append(product_ket(ms, {"a": basis_vector(12, na), "b": basis_vector(12, nb)}))
    states.append(product_ket(ms, {"a": coherent_vector(12, 0.5j), "b": basis_vector(12, 1)}))
    for psi in states:
        for theta in np.linspace(0, math.pi, 9):
            assert epr_variance(psi, theta) >= 2 - 1e-10


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 1.5])
def test_tmss_witness(r):
    ms = mode_spec(40)
    v = epr_variance(ideal_tmss(-1j * r, ms), math.pi / 4)
    assert v < 2 and is_entangled(v)


def test_monotonic_under_ideal_evolution():
    d = derive(ModelParams(Delta=90.0, Omega=50.0))
    ms = mode_spec(60)
    res = propagate_schrodinger(build_h_minus(d, ms), _vacuum(ms), TimeGrid.for_squeezing(d.lam, 1.5, 16))
    vs = [epr_variance(res.ket(k), math.pi / 4) for k in range(len(res.times))]
    assert all(b < a for a, b in zip(vs, vs[1:]))


def test_rotate_moments_matches_free_rotation():
    ms = mode_spec(4)
    psi = _random_ket(11, ms)
    pa, pb = 0.7, -1.9
    n = np.arange(4)
    phase = np.exp(-1j * (pa * n[:, None] + pb * n[None, :])).reshape(-1)
    rotated = KetState(ms, phase * psi.amplitudes)
    assert np.allclose(moments(rotated), rotate_moments(moments(psi), pa, pb), atol=1e-13)


# --- dB, witness, ideal curve -------------------------------------------------------------

def test_db_values():
    assert squeezing_db(2.0) == 0.0
    assert squeezing_db(0.178) == pytest.approx(10.51, abs=5e-3)
    assert squeezing_db(2 * math.exp(-3)) == pytest.approx(13.03, abs=5e-3)
    assert squeezing_db(0.0996) == pytest.approx(13.03, abs=5e-3)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_db_rejects_non_positive(bad):
    with pytest.raises(InvalidVariance):
        squeezing_db(bad)


@given(v=st.floats(min_value=1e-6, max_value=1e3))
def test_db_round_trip(v):
    assert variance_from_db(squeezing_db(v)) == pytest.approx(v, rel=1e-12)


@given(r=st.floats(min_value=0.0, max_value=3.0))
def test_ideal_variance(r):
    assert ideal_variance(r) == pytest.approx(2 * math.exp(-2 * r))
    assert ideal_variance(r + 0.1) < ideal_variance(r)


def test_witness_threshold():
    assert is_entangled(1.999) and not is_entangled(2.0) and not is_entangled(2.5)


# --- theta optimization ---------------------------------------------------------------------

def test_optimize_theta_on_h_minus_state():
    d = derive(ModelParams(Delta=90.0, Omega=50.0))
    ms = mode_spec(50)
    res = propagate_schrodinger(build_h_minus(d, ms), _vacuum(ms), TimeGrid.for_squeezing(d.lam, 1.0, 2))
    th, v = optimize_theta(res.ket(1))
    assert th == pytest.approx(math.pi / 4, abs=1e-4)
    assert v == pytest.approx(2 * math.exp(-2), abs=1e-6)


def test_optimize_theta_flat_for_vacuum():
    th, v = optimize_theta(_vacuum(mode_spec(3)))
    assert 0 <= th < math.pi and v == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("t", [5.0, 17.0, 40.0])
def test_optimize_theta_follows_stark_frame(t):
    d = derive(ModelParams(Delta=90.0, Omega=50.0))
    ms = mode_spec(30)
    psi = ideal_tmss(-1j * 0.8, ms)
    th0, v0 = optimize_theta(psi)
    th1, v1 = optimize_theta(apply(frame_u_minus(d, t, ms), psi))
    shift = (th1 - th0 - d.chi_a * t) % math.pi
    assert min(shift, math.pi - shift) <= 1e-4
    assert v1 == pytest.approx(v0, abs=1e-9)


def test_optimize_theta_needs_grid():
    with pytest.raises(ValueError):
        optimize_theta(_vacuum(mode_spec(3)), n_grid=8)


@given(seed=st.integers(0, 10_000))
def test_optimized_variance_is_minimal(seed):
    psi = _random_ket(seed, mode_spec(4))
    th, v = optimize_theta(psi)
    grid = np.linspace(0, math.pi, 181)
    assert v <= min(epr_variance(psi, g) for g in grid) + 1e-9
    assert epr_variance(psi, th) == pytest.approx(v, abs=1e-12)


# --- ensembles and records -------------------------------------------------------------------

def test_ensemble_variance_is_mixed_state_variance():
    ms = mode_spec(4)
    kets = [_random_ket(s, ms) for s in range(5)]
    samples = np.array([moments(k) for k in kets])
    rho = sum(k.to_density().matrix for k in kets) / 5
    from cqedsqueeze.fockspace import DensityOperator

    v, err = ensemble_variance(samples, 0.3)
    assert v == pytest.approx(epr_variance(DensityOperator(ms, rho), 0.3), abs=1e-12)
    assert err > 0
    same = np.repeat(samples[:1], 4, axis=0)
    v1, err1 = ensemble_variance(same, 0.3)
    assert v1 == pytest.approx(variance_from_moments(samples[0], 0.3), abs=1e-12) and err1 == pytest.approx(0, abs=1e-12)


def test_squeezing_record_consistency(tmss):
    ms, psi = tmss
    m = moments(psi)
    rec = SqueezingRecord.from_moments(t=40.0, r=1.0, m=m, theta=math.pi / 4)
    assert rec.dB == pytest.approx(squeezing_db(rec.V_ar), abs=1e-12)
    assert rec.entangled == (rec.V_ar < 2)
    assert rec.theta_opt == pytest.approx(math.pi / 4, abs=1e-4) and rec.V_ar_stderr is None
    opt = SqueezingRecord.from_moments(t=40.0, r=1.0, m=rotate_moments(m, 0.2, 0.2), theta=math.pi / 4,
                                       use_optimized=True)
    assert opt.theta == opt.theta_opt and opt.V_ar == pytest.approx(rec.V_ar, abs=1e-9)
    assert set(rec.to_dict()) >= {"t", "r", "V_ar", "dB", "theta", "entangled", "theta_opt", "V_ar_min"}


# --- diagnostics -------------------------------------------------------------------------------

def test_diagnostics_vacuum():
    spec = system_spec(4)
    psi = product_ket(spec, {"qubit": atom_vector(2, "g"), "a": basis_vector(4, 0), "b": basis_vector(4, 0)})
    diag = diagnostics(psi)
    assert tuple(diag) == DIAGNOSTIC_NAMES
    assert diag["n_a"] == diag["n_b"] == diag["leak_a"] == diag["leak_b"] == 0.0
    assert diag["sigma_z"] == -1.0 and diag["p_g"] == 1.0
    assert all(v == 0.0 for v in diagnostics(_vacuum(mode_spec(3))).values())


def test_diagnostics_excited_qubit():
    spec = system_spec(3)
    psi = product_ket(spec, {"qubit": atom_vector(2, "e"), "a": basis_vector(3, 2), "b": basis_vector(3, 0)})
    diag = diagnostics(psi)
    assert diag["sigma_z"] == 1.0 and diag["p_e"] == 1.0
    assert diag["n_a"] == pytest.approx(2.0, abs=1e-14) and diag["leak_a"] == 1.0


def test_diagnostics_tmss_photon_number():
    ms = mode_spec(120)
    diag = diagnostics(ideal_tmss(-1j * 1.5, ms))
    assert diag["n_a"] == pytest.approx(math.sinh(1.5) ** 2, abs=1e-6)
    assert diag["n_b"] == pytest.approx(4.534, abs=1e-3)
