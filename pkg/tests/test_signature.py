import numpy as np
import pytest

from torsig import bundle, complexes, exterior, signature
from torsig.errors import OddDimension, TauNotPreserving
from conftest import random_spd_metric

TOL = 1e-12


@pytest.fixture
def flux4():
    return complexes.FluxForm.constant(4, 3, {(0, 1, 2): 0.6})


def test_tau_squares_to_identity(rng, t4):
    M = signature.tau_matrix(t4)
    assert np.max(np.abs(M @ M - np.eye(16))) < TOL
    stretched = random_spd_metric(rng, 4)
    M2 = signature.tau_matrix(stretched)
    assert np.max(np.abs(M2 @ M2 - np.eye(16))) < 1e-10


def test_tau_on_function_t2():
    # m = 1, p = 0: tau(1) = i * star(1) = i * sqrt(det G) dx_12
    metric = exterior.FlatMetric(np.diag([4.0, 1.0]))
    amb = exterior.Ambient(metric, bundle.trivial_bundle(2), 1)
    w = exterior.Form.basis(amb, (0, 0), ())
    tw = signature.tau(w)
    assert abs(tw.coeffs[((0, 0), 0, (0, 1))] - 2j) < TOL


def test_tau_hermitian(rng, t4):
    amb = exterior.Ambient(t4, bundle.trivial_bundle(4), 1)
    for _ in range(5):
        a = exterior.random_form(amb, rng, n_terms=6)
        b = exterior.random_form(amb, rng, n_terms=6)
        lhs = exterior.inner_product(signature.tau(a), b)
        rhs = exterior.inner_product(a, signature.tau(b))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_tau_odd_dimension_rejected(t3):
    with pytest.raises(OddDimension):
        signature.tau_matrix(t3)


def test_tau_commutes_with_direct_sum(t4, flux4):
    b1 = bundle.trivial_bundle(4)
    b2 = bundle.FlatBundle([[0.25, 0.0, 0.0, 0.5]])
    bs = b1.direct_sum(b2)
    amb = exterior.Ambient(t4, bs, 1)
    w0 = exterior.Form.basis(amb, (0, 0, 0, 0), (0, 1), channel=0)
    w1 = exterior.Form.basis(amb, (0, 0, 0, 0), (0, 1), channel=1)
    t0 = signature.tau(w0)
    t1 = signature.tau(w1)
    assert all(key[1] == 0 for key in t0.coeffs)
    assert all(key[1] == 1 for key in t1.coeffs)


def test_signature_operator_squares_to_laplacian(t4, flux4):
    B = signature.signature_operator(t4, bundle.trivial_bundle(4), flux4, 1)
    lap = complexes.twisted_laplacian(t4, bundle.trivial_bundle(4), flux4, 1)
    assert ((B @ B) - lap).max_abs() < TOL * 100


def test_signature_operator_hermitian_real_spectrum(t4, flux4):
    B = signature.signature_operator(t4, bundle.trivial_bundle(4), flux4, 1)
    assert B.hermiticity_defect() < TOL
    for vals, _ in B.eigh().values():
        assert np.all(np.isfinite(vals))


def test_anticommutation_iff_admissible(t4, flux4):
    b = bundle.trivial_bundle(4)
    rep = signature.anticommutation_defect(t4, b, flux4, 2)
    assert rep.admissible and rep.defect < 1e-10
    bad = complexes.FluxForm(4, {3: {((0,) * 4, (0, 1, 2)): 0.6j}},
                             check_closed=False)
    rep2 = signature.anticommutation_defect(t4, b, bad, 2)
    assert not rep2.admissible
    assert rep2.defect > 0.1 * rep2.flux_norm


def test_anticommutation_zero_flux(t4):
    rep = signature.anticommutation_defect(
        t4, bundle.trivial_bundle(4), complexes.FluxForm.zero(4), 1)
    assert rep.defect < TOL


def test_hermitian_form_flat_t4(t4):
    res = signature.hermitian_form(
        t4, bundle.trivial_bundle(4), complexes.FluxForm.zero(4), 1.0, 2)
    assert res.signature == 0
    assert res.dim_plus == res.dim_minus == 8


@pytest.mark.parametrize("lam", [1.0, 1j, -1.0])
def test_signature_lambda_independent(lam, t4, flux4):
    res = signature.hermitian_form(t4, bundle.trivial_bundle(4), flux4, lam, 2)
    assert res.signature == 0
    assert (res.dim_plus, res.dim_minus) == (6, 6)


def test_rank_scaling(t4, flux4):
    for rank in (1, 2, 3):
        res = signature.hermitian_form(
            t4, bundle.trivial_bundle(4, rank), flux4, 1.0, 2)
        assert res.signature == 0
        assert res.dim_plus + res.dim_minus == 12 * rank


def test_splitting_agrees_with_form(t4, flux4):
    for fb in (bundle.trivial_bundle(4),
               bundle.trivial_bundle(4, 2),
               bundle.FlatBundle([[0.0] * 4, [0.25, 0.5, 0.0, 0.0]])):
        hs = signature.harmonic_splitting_signature(t4, fb, flux4, 2)
        hf = signature.hermitian_form(t4, fb, flux4, 1.0, 2)
        assert hs.signature == hf.signature
        assert hs.dim_plus + hs.dim_minus == hf.dim_plus + hf.dim_minus


def test_splitting_counts_cohomology(t4, flux4):
    coh = complexes.twisted_cohomology(t4, bundle.trivial_bundle(4), flux4, 2)
    hs = signature.harmonic_splitting_signature(
        t4, bundle.trivial_bundle(4), flux4, 2)
    assert hs.dim_plus + hs.dim_minus == coh.b_even + coh.b_odd


def test_splitting_rejects_inadmissible(t4):
    bad = complexes.FluxForm(4, {3: {((0,) * 4, (0, 1, 2)): 0.6j}},
                             check_closed=False)
    with pytest.raises(TauNotPreserving):
        signature.harmonic_splitting_signature(
            t4, bundle.trivial_bundle(4), bad, 1)


def test_signature_metric_stability(rng, flux4):
    g0 = exterior.FlatMetric(np.eye(4))
    S = rng.normal(size=(4, 4))
    g1 = exterior.FlatMetric(np.eye(4) + 0.05 * (S + S.T))
    s0 = signature.harmonic_splitting_signature(
        g0, bundle.trivial_bundle(4), flux4, 2)
    s1 = signature.harmonic_splitting_signature(
        g1, bundle.trivial_bundle(4), flux4, 2)
    assert s0.signature == s1.signature


def test_index_split_identities(t4, flux4):
    for fb, expect_chi in ((bundle.trivial_bundle(4), 0),
                           (bundle.FlatBundle([[0.21, 0.13, 0.37, 0.08]]), 0)):
        rep = signature.index_split_check(t4, fb, flux4, 2)
        assert rep["chi"] == expect_chi
        assert rep["identity_even"] and rep["identity_odd"]
        assert rep["consistency_sum"]


def test_index_split_generic_holonomy_empty(t4, flux4):
    fb = bundle.FlatBundle([[0.21, 0.13, 0.37, 0.08], [0.61, 0.43, 0.11, 0.79]])
    rep = signature.index_split_check(t4, fb, flux4, 2)
    assert rep["chi"] == 0 and rep["signature"] == 0
    assert rep["index_even"] == rep["index_odd"] == 0


def test_laplacian_commutes_with_tau_for_admissible(t4, flux4):
    lap = complexes.twisted_laplacian(t4, bundle.trivial_bundle(4), flux4, 1)
    T = signature.tau_matrix(t4)
    worst = max(float(np.max(np.abs(M @ T - T @ M))) for M in lap.mats[0])
    assert worst < 1e-10
