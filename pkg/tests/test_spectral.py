import numpy as np
import pytest

from torsig import blockops, bundle, complexes, exterior, spectral
from torsig.errors import EvenDimension, UnsupportedDimension
from conftest import random_spd_metric

TOL = 1e-12


@pytest.fixture
def op_h(t3, triv3, flux_h3):
    return spectral.odd_signature_operator(t3, triv3, flux_h3, 2)


def test_even_dimension_rejected(t4):
    with pytest.raises(EvenDimension):
        spectral.odd_signature_operator(
            t4, bundle.trivial_bundle(4), complexes.FluxForm.zero(4), 1)


def test_hermitian(op_h):
    assert op_h.hermiticity_defect() < TOL


def test_t_conjugation(op_h, t3):
    T = spectral.t_conjugation_matrix(t3)
    assert np.max(np.abs(T @ T - np.eye(8))) < TOL
    conj = op_h.map(lambda M, a: T @ M @ T)
    assert (conj - op_h).max_abs() < 1e-10


def test_square_is_laplacian(op_h, t3, triv3, flux_h3):
    lap = complexes.twisted_laplacian(t3, triv3, flux_h3, 2)
    assert ((op_h @ op_h) - lap).max_abs() < 1e-10


def test_zero_flux_mode_zero_kernel(t3, triv3):
    op = spectral.odd_signature_operator(t3, triv3, complexes.FluxForm.zero(3), 1)
    ev = blockops.even_positions(3)
    blk = op.block((0, 0, 0))[np.ix_(ev, ev)]
    vals = np.linalg.eigvalsh(blk)
    assert np.max(np.abs(vals)) < TOL  # 4-dimensional kernel


def test_block_spectrum_closed_form(t3, triv3):
    """Exact eigenvalues per block for degree-3 constant flux on the unit
    3-torus: {q, -q, (-t +/- sqrt(t^2 + 4 q^2))/2} with q = 2 pi |k|."""
    h = 0.7
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    op = spectral.odd_signature_operator(t3, triv3, flux, 2)
    ev = blockops.even_positions(3)
    for mode in ((1, 0, 0), (1, 1, 0), (2, -1, 1)):
        q = 2 * np.pi * np.linalg.norm(mode)
        S = np.sqrt(h * h + 4 * q * q)
        expected = np.sort([q, -q, (-h + S) / 2, (-h - S) / 2])
        got = np.sort(np.linalg.eigvalsh(op.block(mode)[np.ix_(ev, ev)]))
        assert np.max(np.abs(got - expected)) < 1e-9


def test_spectrum_negation_symmetry(t3, triv3):
    op = spectral.odd_signature_operator(t3, triv3, complexes.FluxForm.zero(3), 2)
    sp = spectral.spectrum(op)
    vals = np.sort(sp.eigenvalues)
    assert np.max(np.abs(vals + vals[::-1])) < 1e-9


def test_spectrum_count_and_metric_scaling(rng, triv3):
    G = random_spd_metric(rng, 3)
    op1 = spectral.odd_signature_operator(
        G, triv3, complexes.FluxForm.zero(3), 1)
    sp1 = spectral.spectrum(op1)
    assert len(sp1.eigenvalues) == 27 * 4
    c = 1.7
    G2 = exterior.FlatMetric(c ** 2 * G.G)
    sp2 = spectral.spectrum(spectral.odd_signature_operator(
        G2, triv3, complexes.FluxForm.zero(3), 1))
    nz1 = sp1.eigenvalues[np.abs(sp1.eigenvalues) > 1e-9]
    nz2 = sp2.eigenvalues[np.abs(sp2.eigenvalues) > 1e-9]
    assert np.max(np.abs(np.sort(nz1 / c) - np.sort(nz2))) < 1e-9


# ---------------------------------------------------------------------------
# eta
# ---------------------------------------------------------------------------

def test_eta_zero_flux_exact(t3, triv3):
    op = spectral.odd_signature_operator(t3, triv3, complexes.FluxForm.zero(3), 3)
    est = spectral.eta_invariant(op)
    assert est.method == "mode-symmetry-exact"
    assert est.value == 0.0
    assert est.error_estimate < 1e-6


def test_eta_zero_flux_t5():
    m5 = exterior.FlatMetric(np.eye(5))
    op = spectral.odd_signature_operator(
        m5, bundle.trivial_bundle(5), complexes.FluxForm.zero(5), 2)
    est = spectral.eta_invariant(op)
    assert est.method == "mode-symmetry-exact"
    assert abs(est.value) <= est.error_estimate < 1e-6


def test_eta_negation_antisymmetry(t3, triv3, flux_h3):
    op = spectral.odd_signature_operator(t3, triv3, flux_h3, 2)
    est = spectral.eta_invariant(op, method="zeta-extrapolated")
    neg = op.scale(-1.0)
    est_neg = spectral.eta_invariant(neg, method="zeta-extrapolated")
    assert abs(est.value + est_neg.value) < 1e-9


def test_eta_direct_sum_additivity(t3, flux_h3):
    b1 = bundle.trivial_bundle(3)
    b2 = bundle.FlatBundle([[0.25, 0.0, 0.5]])
    op1 = spectral.odd_signature_operator(t3, b1, flux_h3, 2)
    op2 = spectral.odd_signature_operator(t3, b2, flux_h3, 2)
    ops = spectral.odd_signature_operator(t3, b1.direct_sum(b2), flux_h3, 2)
    s1, c1 = spectral._signed_partial_sums(op1)
    s2, c2 = spectral._signed_partial_sums(op2)
    ss, cs = spectral._signed_partial_sums(ops)
    assert np.max(np.abs(ss - (s1 + s2))) < 1e-9
    assert cs == c1 + c2


def test_eta_symmetry_falls_back_with_flux(t3, triv3, flux_h3):
    op = spectral.odd_signature_operator(t3, triv3, flux_h3, 2)
    est = spectral.eta_invariant(op)
    assert est.method == "zeta-extrapolated"
    # the mode-0 crossing eigenvalue contributes an exact -1
    assert est.detail["small_eigenvalue_count"] == -1.0


def test_eta_estimate_covers_reference_value(t3, triv3):
    """Independent reference: the regularized asymmetry for this model is
    -1 - h^3/(48 pi^2) + O(h^5) (heat-kernel evaluation with certified
    counterterms, eight-digit agreement at h in [0.2, 0.8])."""
    h = 0.5
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    op = spectral.odd_signature_operator(t3, triv3, flux, 6)
    est = spectral.eta_invariant(op)
    reference = -1.0 - h ** 3 / (48 * np.pi ** 2)
    assert abs(est.value - reference) <= est.error_estimate


def test_rho_trivial_bundle_is_zero(t3, flux_h3):
    rho, _, _ = spectral.rho_invariant(t3, bundle.trivial_bundle(3), flux_h3, 2)
    assert abs(rho.value) < 1e-9


def test_rho_conjugate_pair_real(t3, flux_h3):
    fb = bundle.FlatBundle([[1.0 / 3.0, 0.0, 0.0], [2.0 / 3.0, 0.0, 0.0]])
    rho, _, _ = spectral.rho_invariant(t3, fb, flux_h3, 3)
    assert abs(rho.value.imag if np.iscomplexobj(rho.value) else 0.0) < TOL
    # spectra of conjugate channels mirror each other: the pair behaves like
    # a real representation, so the estimate must be real-valued by type
    assert isinstance(rho.value, float)


def test_rho_metric_independence(t3, flux_h3):
    fb = bundle.FlatBundle([[1.0 / 3.0, 0.0, 0.0]])
    g1 = exterior.FlatMetric(np.diag([1.44, 1.0, 0.81]))
    r0, _, _ = spectral.rho_invariant(t3, fb, flux_h3, 5)
    r1, _, _ = spectral.rho_invariant(g1, fb, flux_h3, 5)
    assert abs(r0.value - r1.value) < np.hypot(r0.error_estimate,
                                               r1.error_estimate)


# ---------------------------------------------------------------------------
# spectral flow
# ---------------------------------------------------------------------------

def test_flow_zero_path(t3, triv3):
    res = spectral.spectral_flow(t3, triv3, complexes.FluxForm.zero(3), 1,
                                 steps=16)
    assert res.flow == 0 and not res.crossings


def test_flow_t3_flux_oracle(t3, triv3):
    """Independent oracle: the mode-zero family is the only block that can
    cross; its four eigenvalues are {0, 0, 0, -u h} by dense eigensolve."""
    h = 0.5
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    res = spectral.spectral_flow(t3, triv3, flux, 2, steps=16)
    assert res.flow == -1
    assert len(res.crossings) == 1
    c = res.crossings[0]
    assert c.mode == (0, 0, 0) and c.sign == -1 and c.multiplicity == 1
    # crossing of the level -delta happens at u = delta / h
    assert abs(c.u - 1e-7 / h) < 1e-6
    # oracle: dense eigensolve of the mode-zero family
    base, d1 = spectral._path_blocks(t3, triv3, flux, 1)
    idx = base.modes.index((0, 0, 0))
    ev = blockops.even_positions(3)
    for u in (0.25, 0.75, 1.0):
        M = (base.mats[0][idx] + u * d1.mats[0][idx])[np.ix_(ev, ev)]
        vals = np.sort(np.linalg.eigvalsh(M))
        assert np.max(np.abs(vals - np.array([-u * h, 0, 0, 0]))) < 1e-10


def test_flow_concatenation_additivity(t3, triv3):
    h = 0.4
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    full = spectral.spectral_flow(t3, triv3, flux, 1, steps=32, u0=0.0, u1=2.0)
    first = spectral.spectral_flow(t3, triv3, flux, 1, steps=16, u0=0.0, u1=1.0)
    second = spectral.spectral_flow(t3, triv3, flux, 1, steps=16, u0=1.0, u1=2.0)
    assert full.flow == first.flow + second.flow


def test_flow_reversal_cancels(t3, triv3):
    h = 0.4
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    fwd = spectral.spectral_flow(t3, triv3, flux, 1, steps=16, u0=0.0, u1=1.0)
    # reversing the path through the crossing region: the level convention
    # breaks exact time-reversal at the endpoints, so reverse from u1 to a
    # point past zero on the same side
    bwd = spectral.spectral_flow(t3, triv3, flux, 1, steps=16, u0=1.0, u1=0.5)
    cont = spectral.spectral_flow(t3, triv3, flux, 1, steps=16, u0=0.5, u1=1.0)
    assert bwd.flow + cont.flow == 0


# ---------------------------------------------------------------------------
# local term
# ---------------------------------------------------------------------------

def test_local_term_value(t3):
    h = 0.9
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    rep = spectral.local_term(t3, flux)
    assert abs(rep["local_term"] - (-h / (4 * np.pi ** 2))) < TOL
    assert abs(rep["integral_of_flux"] - h) < TOL


def test_local_term_zero(t3):
    rep = spectral.local_term(t3, complexes.FluxForm.zero(3))
    assert rep["local_term"] == 0


def test_local_term_dimension_guard():
    m5 = exterior.FlatMetric(np.eye(5))
    with pytest.raises(UnsupportedDimension):
        spectral.local_term(m5, complexes.FluxForm.constant(5, 3, {(0, 1, 2): 1.0}))


def test_torsion_endomorphism_antisymmetry(rng, t3):
    h = 0.8
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): h})
    rep = spectral.local_term(t3, flux)
    G = t3.G
    for S in rep["torsion_endomorphisms"]:
        M = G @ S  # g(S b, c) as a bilinear form: must be antisymmetric
        assert np.max(np.abs(M + M.T)) < TOL
    # defining identity: g(S(e_i) e_j, e_k) = -2 H(e_i, e_j, e_k); in matrix
    # form (G S_i)[k, j] = -2 h eps_{ijk}, so the (k=2, j=1) entry of G S_0
    # equals -2h
    S1 = rep["torsion_endomorphisms"][0]
    assert abs((G @ S1)[2, 1] - (-2 * h)) < TOL


# ---------------------------------------------------------------------------
# flux representative experiment
# ---------------------------------------------------------------------------

def test_flux_representative_zero_potential(t3, triv3, flux_h3):
    amb = exterior.Ambient(t3, triv3, 1)
    B = exterior.Form.zero(amb)
    rep = spectral.flux_representative_experiment(
        t3, triv3, flux_h3, B, [1, 2])
    for row in rep["rows"]:
        assert abs(row["eta_difference_estimate"]) < 1e-9


def test_flux_representative_trend(t3, triv3, flux_h3):
    amb = exterior.Ambient(t3, triv3, 1)
    B = exterior.Form(amb, {((1, 0, 0), 0, (1, 2)): 0.2,
                            ((-1, 0, 0), 0, (1, 2)): 0.2})
    rep = spectral.flux_representative_experiment(
        t3, triv3, flux_h3, B, [1, 2])
    assert "warning" in rep
    assert all(np.isfinite(r["eta_difference_estimate"]) for r in rep["rows"])
    assert all(r["hermiticity_defect"] >= 0 for r in rep["rows"])


def test_eta_heat_probe_cross_check(t3, triv3):
    """The heat-transform integrand vanishes identically when the spectrum
    is symmetric, and is finite/sign-consistent with the crossing term for
    flux."""
    op0 = spectral.odd_signature_operator(t3, triv3, complexes.FluxForm.zero(3), 2)
    probe0 = spectral.eta_heat_probe(op0)
    assert max(abs(x) for x in probe0["integrand"]) < 1e-9
    fluxh = complexes.FluxForm.constant(3, 3, {(0, 1, 2): 0.5})
    oph = spectral.odd_signature_operator(t3, triv3, fluxh, 2)
    probe = spectral.eta_heat_probe(oph, (2.0, 4.0))
    assert all(np.isfinite(x) for x in probe["integrand"])
    assert all(x < 0 for x in probe["integrand"])  # dominated by the -uh mode


def test_eta_fallback_emits_warning(t3, triv3, flux_h3):
    op = spectral.odd_signature_operator(t3, triv3, flux_h3, 1)
    with pytest.warns(UserWarning, match="mode pairing not detected"):
        spectral.eta_invariant(op, method="auto")
