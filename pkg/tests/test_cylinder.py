import numpy as np
import pytest

from torsig import bundle, complexes, cylinder, exterior, spectral


def ode_count_oracle(lam, L, ztol):
    """Independent closed-form count for one boundary eigenvalue.

    Solutions of f' + lam f = 0 are c exp(-lam r).  Build the active
    boundary-condition row values on the solution basis and count kernel
    by rank; the adjoint problem uses -g' + lam g = 0 with complementary
    projections.
    """
    rows = []
    if lam >= -ztol:                # projection of D at r = 0 includes >= 0
        rows.append(1.0)            # f(0) = c
    if lam <= ztol:                 # projection of -D at r = L includes <= 0
        rows.append(np.exp(-min(lam * L, 700.0)))
    ker = 1 - (1 if any(abs(r) > 0 for r in rows) else 0)
    rows_adj = []
    if lam < -ztol:
        rows_adj.append(1.0)        # g(0) = c for strictly negative modes
    if lam > ztol:
        rows_adj.append(np.exp(min(lam * L, 700.0)))
    coker = 1 - (1 if any(abs(r) > 0 for r in rows_adj) else 0)
    return ker, coker


@pytest.mark.parametrize("h", [0.0, 0.45])
@pytest.mark.parametrize("L", [1.0, 2.0])
def test_index_against_ode_oracle(t3, triv3, h, L):
    flux = (complexes.FluxForm.zero(3) if h == 0
            else complexes.FluxForm.constant(3, 3, {(0, 1, 2): h}))
    prob = cylinder.CylinderProblem(t3, triv3, flux, L, 2)
    res = cylinder.aps_cylinder_index(prob)
    vals, ztol = cylinder._boundary_eigenvalues(prob)
    ker = coker = 0
    for lam in vals:
        k, c = ode_count_oracle(float(lam), L, ztol)
        ker += k
        coker += c
    assert res.index == ker - coker
    assert res.dim_ker_plus == ker and res.dim_ker_minus == coker


def test_index_values_flat(t3, triv3):
    prob = cylinder.CylinderProblem(t3, triv3, complexes.FluxForm.zero(3), 1.0, 2)
    res = cylinder.aps_cylinder_index(prob)
    assert res.index == -8            # minus twice the even-form kernel (2 x 4)
    assert res.dim_ker_boundary == 8
    assert res.h_plus == res.h_minus == 0
    assert res.h_infinity == 8
    assert res.index == res.h_plus - res.h_minus - res.h_infinity


def test_index_values_flux(t3, triv3, flux_h3):
    prob = cylinder.CylinderProblem(t3, triv3, flux_h3, 1.0, 2)
    res = cylinder.aps_cylinder_index(prob)
    assert res.index == -6
    assert res.index + res.dim_ker_boundary == 0
    # h_infinity equals the boundary kernel dimension
    op = spectral.odd_signature_operator(t3, triv3, flux_h3, 2)
    vals = np.concatenate([v.reshape(-1) for v, _ in op.eigh().values()])
    n_zero = int(np.sum(np.abs(vals) < 1e-8))
    assert res.h_infinity == n_zero


def test_length_independence(t3, triv3, flux_h3):
    idx = [cylinder.aps_cylinder_index(
        cylinder.CylinderProblem(t3, triv3, flux_h3, L, 2)).index
        for L in (0.5, 1.0, 3.0)]
    assert len(set(idx)) == 1


def test_signature_identity(t3, triv3, flux_h3):
    prob = cylinder.CylinderProblem(t3, triv3, flux_h3, 1.0, 2)
    rep = cylinder.cylinder_signature_identity(prob)
    assert rep["identity_holds"]


def test_signature_identity_with_holonomy(t3):
    fb = bundle.FlatBundle([[0.25, 0.5, 0.0]])
    prob = cylinder.CylinderProblem(t3, fb, complexes.FluxForm.zero(3), 1.0, 2)
    rep = cylinder.cylinder_signature_identity(prob)
    assert rep["identity_holds"]
    # generic holonomy: no boundary kernel at all, index 0
    res = cylinder.aps_cylinder_index(prob)
    assert res.index == 0 and res.dim_ker_boundary == 0


# ---------------------------------------------------------------------------
# interval cohomology
# ---------------------------------------------------------------------------

def test_interval_absolute_flat(t3, triv3):
    prob = cylinder.CylinderProblem(t3, triv3, complexes.FluxForm.zero(3), 1.0, 2)
    rep = cylinder.interval_cohomology(prob, "absolute")
    assert (rep["b_even"], rep["b_odd"]) == (4, 4)
    assert rep["matches_base"]


def test_interval_absolute_flux(t3, triv3, flux_h3):
    for L in (1.0, 2.0):
        prob = cylinder.CylinderProblem(t3, triv3, flux_h3, L, 2)
        rep = cylinder.interval_cohomology(prob, "absolute")
        assert (rep["b_even"], rep["b_odd"]) == (3, 3)
        assert rep["matches_base"]


def test_interval_relative_swaps_parity(t3, triv3, flux_h3):
    prob = cylinder.CylinderProblem(t3, triv3, flux_h3, 1.0, 2)
    rep = cylinder.interval_cohomology(prob, "relative")
    base = complexes.twisted_cohomology(t3, triv3, flux_h3, 2)
    assert (rep["b_even"], rep["b_odd"]) == (base.b_odd, base.b_even)
    assert rep["matches_base"]


def test_interval_relative_to_absolute_vanishes(t3, triv3):
    prob = cylinder.CylinderProblem(t3, triv3, complexes.FluxForm.zero(3), 1.0, 2)
    rep = cylinder.interval_cohomology(prob, "absolute")
    assert rep["relative_to_absolute_map_norm"] == 0.0


def test_interval_ode_counts_directly():
    # the scalar two-point problems behind the counting
    assert cylinder._interval_solution_count(0.0, 1.0, "neumann", 1e-12) == 1
    assert cylinder._interval_solution_count(0.0, 1.0, "dirichlet", 1e-12) == 0
    for mu in (1e-6, 1.0, 400.0, 5e4):
        for cond in ("neumann", "dirichlet"):
            assert cylinder._interval_solution_count(mu, 2.0, cond, 1e-12) == 0


# ---------------------------------------------------------------------------
# boundary identification
# ---------------------------------------------------------------------------

def test_identification_flat(t3, triv3):
    assert cylinder.boundary_identification_check(
        t3, triv3, complexes.FluxForm.zero(3), 1) < 1e-10


def test_identification_admissible_flux(t3, triv3, flux_h3):
    assert cylinder.boundary_identification_check(t3, triv3, flux_h3, 1) < 1e-10


def test_identification_stretched_metric_and_holonomy(rng):
    from conftest import random_spd_metric

    metric = random_spd_metric(rng, 3)
    fb = bundle.FlatBundle([[0.25, 0.0, 0.5]])
    flux = complexes.FluxForm.constant(3, 3, {(0, 1, 2): 0.3})
    assert cylinder.boundary_identification_check(metric, fb, flux, 1) < 1e-10


def test_identification_negative_control(t3, triv3):
    bad = complexes.FluxForm(3, {3: {((0, 0, 0), (0, 1, 2)): 0.4j}},
                             check_closed=False)
    defect = cylinder.boundary_identification_check(t3, triv3, bad, 1)
    assert defect > 0.1 * 0.4
