"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines; the
bundled CLI equivalent is ``torsig verify``.
"""

import json
import time

import numpy as np
import pytest

from torsig import cli, verify


def _report(num, name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {num:02d} {name}: {status} {detail}".rstrip())
    return passed


def test_criterion_01_betti_integers_and_runtime():
    t0 = time.perf_counter()
    rep = verify.criterion_betti(K=3)
    elapsed = time.perf_counter() - t0
    ok = rep["passed"] and elapsed < 1.0
    assert _report(1, "twisted Betti numbers with rank oracle", ok,
                   f"({elapsed:.2f}s)")


def test_criterion_02_exactness_and_adjoints():
    rep = verify.criterion_exactness_adjoints(seed=0, n_configs=50)
    detail = (f"square {rep['worst_square_defect']:.2e}, "
              f"adjoint {rep['worst_adjoint_defect']:.2e} over {rep['configs']}")
    assert _report(2, "exactness and adjoint agreement", rep["passed"], detail)


def test_criterion_03_scaling_conjugation():
    rep = verify.criterion_scaling()
    assert _report(3, "scaling conjugation identity", rep["passed"],
                   f"worst defect {rep['worst_defect']:.2e}")


def test_criterion_04_gauge_intertwining():
    rep = verify.criterion_gauge(seed=0, n_potentials=10)
    assert _report(4, "gauge intertwining", rep["passed"],
                   f"worst defect {rep['worst_defect']:.2e}")


def test_criterion_05_anticommutation_iff():
    rep = verify.criterion_anticommutation()
    worst_ratio = min(p["defect"] / p["threshold"] for p in rep["perturbations"])
    assert _report(5, "involution anticommutation iff admissible",
                   rep["passed"],
                   f"good {rep['admissible_defect']:.1e}, "
                   f"min bad ratio {worst_ratio:.1f}x")


def test_criterion_06_signature_identities():
    rep = verify.criterion_signature()
    assert _report(6, "signature identities", rep["passed"])


def test_criterion_07_kunneth_poincare():
    rep = verify.criterion_kunneth_pd()
    sigmas = [p["sigma_min"] for p in rep["pairings"]]
    assert _report(7, "Kunneth and duality pairing", rep["passed"],
                   f"min sigma {min(sigmas):.2e}")


def test_criterion_08_eta_zero_flux():
    rep = verify.criterion_eta_flat(K3=3, K5=2)
    detail = "; ".join(f"T{r['dim']}: |eta|={abs(r['eta']):.1e}"
                       f"<=err={r['error']:.1e}" for r in rep["rows"])
    assert _report(8, "eta vanishes at zero flux", rep["passed"], detail)


def test_criterion_09_spectral_flow_eta_relation():
    """Fitted slope of eta(D_h) - eta(D) - 2 sf against h must match
    1/(2 pi^2) to 5 percent (K = 6, 64 path steps)."""
    t0 = time.perf_counter()
    rep = verify.criterion_flow_eta_relation(K=6, steps=64)
    elapsed = time.perf_counter() - t0
    detail = (f"slope {rep['fitted_slope']:+.5f} (sign {rep['slope_sign']:+d}) "
              f"vs target magnitude {rep['target_magnitude']:.5f} "
              f"[{elapsed:.0f}s]")
    ok = rep["passed"] and elapsed < 300.0
    _report(9, "spectral-flow/eta slope", ok, detail)
    assert elapsed < 300.0
    assert rep["passed"], (
        "fitted slope magnitude outside 5% of 1/(2 pi^2): " + detail
    )


def test_criterion_10_rho_metric_independence():
    rep = verify.criterion_rho_metric(K=6)
    detail = (f"|rho({rep['rho_flat']['value']:.3f}) - "
              f"rho({rep['rho_stretched']['value']:.3f})| = "
              f"{rep['difference']:.4f} < {rep['combined_error']:.4f}")
    assert _report(10, "rho metric independence", rep["passed"], detail)


def test_criterion_11_aps_cylinder():
    rep = verify.criterion_aps()
    assert _report(11, "cylinder index identities", rep["passed"],
                   f"{len(rep['rows'])} cylinder configurations")


def test_criterion_12_heat_traces():
    rep = verify.criterion_heat()
    worst = max(r["max_rel_diff"] for r in rep["poisson_rows"])
    assert _report(12, "heat trace identities", rep["passed"],
                   f"worst Poisson rel diff {worst:.2e}")


def test_criterion_13_verify_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "manifold": {"dim": 3, "metric": [1, 0, 0, 0, 1, 0, 0, 0, 1]},
        "bundle": {"rank": 1, "holonomy": [[0, 0, 0]]},
        "flux": {"components": []},
        "truncation": 2,
    }))
    outs = []
    codes = []
    for name in ("v1.json", "v2.json"):
        out = tmp_path / name
        codes.append(cli.main(["verify", "--config", str(cfg),
                               "--out", str(out), "--seed", "0"]))
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and codes[0] == codes[1] and codes[0] in (0, 2)
    assert _report(13, "verify output byte-identical across runs", ok,
                   f"{len(outs[0])} bytes, exit {codes[0]}")
