import json
import subprocess
import sys

import numpy as np
import pytest

from torsig import cli, jsonio
from torsig.config import RunConfig
from torsig.errors import ConfigInvalid

T3_FLUX_CONFIG = {
    "manifold": {"dim": 3, "metric": [1, 0, 0, 0, 1, 0, 0, 0, 1]},
    "bundle": {"rank": 1, "holonomy": [[0, 0, 0]]},
    "flux": {"components": [
        {"degree": 3,
         "terms": [{"multi_index": [1, 2, 3], "mode": [0, 0, 0],
                    "re": 0.5, "im": 0.0}]}
    ]},
    "truncation": 3,
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(args):
    return cli.main(args)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_config_roundtrip():
    cfg = RunConfig(T3_FLUX_CONFIG)
    metric, fb, flux = cfg.build()
    assert metric.n == 3 and fb.rank == 1
    assert flux.components[3][((0, 0, 0), (0, 1, 2))] == 0.5


def test_config_rejects_non_spd_metric():
    bad = json.loads(json.dumps(T3_FLUX_CONFIG))
    bad["manifold"]["metric"] = [1, 0, 0, 0, -1, 0, 0, 0, 1]
    with pytest.raises(ConfigInvalid) as exc:
        RunConfig(bad)
    assert exc.value.pointer == "/manifold/metric"


def test_config_rejects_degree_one_flux():
    bad = json.loads(json.dumps(T3_FLUX_CONFIG))
    bad["flux"]["components"][0]["degree"] = 1
    bad["flux"]["components"][0]["terms"][0]["multi_index"] = [1]
    with pytest.raises(ConfigInvalid) as exc:
        RunConfig(bad)
    assert "degree" in exc.value.pointer


def test_config_rejects_bad_multi_index():
    bad = json.loads(json.dumps(T3_FLUX_CONFIG))
    bad["flux"]["components"][0]["terms"][0]["multi_index"] = [1, 2, 2]
    with pytest.raises(ConfigInvalid) as exc:
        RunConfig(bad)
    assert exc.value.pointer == "/flux/components/0/terms/0/multi_index"


def test_config_holonomy_shape_pointer():
    bad = json.loads(json.dumps(T3_FLUX_CONFIG))
    bad["bundle"]["holonomy"] = [[0, 0]]
    with pytest.raises(ConfigInvalid) as exc:
        RunConfig(bad)
    assert exc.value.pointer == "/bundle/holonomy"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def test_cli_betti(tmp_path):
    cfg = write_config(tmp_path, T3_FLUX_CONFIG)
    out = tmp_path / "betti.json"
    assert run_cli(["betti", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["b_even"] == 3 and payload["b_odd"] == 3
    assert "kernel_tolerance" in payload and "verified_mode_radius" in payload


def test_cli_eta_and_rho(tmp_path):
    raw = json.loads(json.dumps(T3_FLUX_CONFIG))
    raw["bundle"]["holonomy"] = [[1.0 / 3.0, 0, 0]]
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "eta.json"
    assert run_cli(["eta", "--config", cfg, "--out", str(out)]) == 0
    eta = json.loads(out.read_text())
    assert set(eta) == {"value", "error", "method", "K"}
    out2 = tmp_path / "rho.json"
    assert run_cli(["rho", "--config", cfg, "--out", str(out2)]) == 0
    rho = json.loads(out2.read_text())
    assert "eta_twisted" in rho and "eta_trivial" in rho


def test_cli_signature(tmp_path):
    raw = {
        "manifold": {"dim": 4, "metric": list(np.eye(4).ravel())},
        "bundle": {"rank": 1, "holonomy": [[0, 0, 0, 0]]},
        "flux": {"components": [
            {"degree": 3, "terms": [{"multi_index": [1, 2, 3], "re": 0.6, "im": 0.0}]}
        ]},
        "truncation": 2,
        "signature": {"lambda": [0.0, 1.0]},
    }
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "sig.json"
    assert run_cli(["signature", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["signature"] == 0
    assert payload["dim_plus"] == 6 and payload["dim_minus"] == 6
    assert payload["defect"] < 1e-10
    assert payload["lambda"] == [0.0, 1.0]


def test_cli_spectral_flow(tmp_path):
    raw = json.loads(json.dumps(T3_FLUX_CONFIG))
    raw["truncation"] = 2
    raw["spectral_flow"] = {"steps": 16}
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "flow.json"
    assert run_cli(["spectral-flow", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["flow"] == -1
    assert payload["crossings"][0]["mode"] == [0, 0, 0]


def test_cli_aps_and_interval(tmp_path):
    raw = json.loads(json.dumps(T3_FLUX_CONFIG))
    raw["truncation"] = 2
    raw["cylinder"] = {"length": 2.0}
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "aps.json"
    assert run_cli(["aps-index", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["identity_holds"] is True
    assert payload["index"] == -6
    out2 = tmp_path / "interval.json"
    assert run_cli(["interval-cohomology", "--config", cfg, "--out", str(out2)]) == 0
    ic = json.loads(out2.read_text())
    assert (ic["b_even"], ic["b_odd"]) == (3, 3)


def test_cli_heat_trace_csv(tmp_path):
    raw = {
        "manifold": {"dim": 1, "metric": [1.0]},
        "bundle": {"rank": 1, "holonomy": [[0.5]]},
        "flux": {"components": []},
        "truncation": 12,
        "heat": {"t_grid": [0.05, 0.25, 1.0]},
    }
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "heat.csv"
    assert run_cli(["heat-trace", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,value,method,tail_bound"
    methods = {ln.split(",")[2] for ln in lines[1:]}
    assert methods == {"eigen", "images"}


def test_cli_alpha0(tmp_path):
    raw = {
        "manifold": {"dim": 4, "metric": list(np.eye(4).ravel())},
        "bundle": {"rank": 2, "holonomy": [[0] * 4, [0] * 4]},
        "flux": {"components": [
            {"degree": 3, "terms": [{"multi_index": [1, 2, 3], "re": 0.3, "im": 0.0}]}
        ]},
        "truncation": 2,
    }
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "alpha0.json"
    assert run_cli(["alpha0", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert abs(payload["alpha0"]) < 1e-10


def test_cli_exit_code_on_invalid_config(tmp_path, capsys):
    bad = json.loads(json.dumps(T3_FLUX_CONFIG))
    bad["manifold"]["metric"] = [1, 0, 0, 0, -1, 0, 0, 0, 1]
    cfg = write_config(tmp_path, bad)
    code = run_cli(["betti", "--config", cfg, "--out", str(tmp_path / "x.json")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigInvalid"
    assert err["pointer"] == "/manifold/metric"


def test_cli_exit_code_on_numerical_error(tmp_path, capsys):
    raw = {
        "manifold": {"dim": 3, "metric": [1, 0, 0, 0, 1, 0, 0, 0, 1]},
        "bundle": {"rank": 1, "holonomy": [[0, 0, 0]]},
        "flux": {"components": []},
        "truncation": 1,
        "heat": {"t_grid": [0.05]},
    }
    cfg = write_config(tmp_path, raw)
    code = run_cli(["heat-trace", "--config", cfg, "--out", str(tmp_path / "h.csv")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "TailTooLarge"


def test_console_script_entry_point(tmp_path):
    cfg = write_config(tmp_path, T3_FLUX_CONFIG)
    out = tmp_path / "out.json"
    proc = subprocess.run(
        [sys.executable, "-m", "torsig.cli", "betti", "--config", cfg,
         "--out", str(out), "--threads", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["b_even"] == 3


def test_report_renders_figures(tmp_path):
    raw = json.loads(json.dumps(T3_FLUX_CONFIG))
    raw["truncation"] = 2
    raw["heat"] = {"t_grid": [0.05, 0.1, 0.2, 0.4, 0.8]}
    cfg = write_config(tmp_path, raw)
    outdir = tmp_path / "report"
    assert run_cli(["report", "--config", cfg, "--out", str(outdir)]) == 0
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert "heat_trace.png" in manifest["figures"]
    assert "eta_extrapolation.png" in manifest["figures"]
    assert "spectral_flow.png" in manifest["figures"]
    assert "heat_trace.csv" in manifest["tables"]
    for name in manifest["figures"] + manifest["tables"]:
        assert (outdir / name).stat().st_size > 0


def test_json_writer_determinism(tmp_path):
    payload = {"b": 1.0 / 3.0, "a": [1, 2.5e-17, True, None], "s": "x"}
    t1 = jsonio.dumps(payload)
    t2 = jsonio.dumps(payload)
    assert t1 == t2
    assert t1.index('"a"') < t1.index('"b"')
    assert "0.33333333333333331" in t1


def test_cli_eta_custom_s_grid(tmp_path):
    raw = json.loads(json.dumps(T3_FLUX_CONFIG))
    raw["truncation"] = 2
    raw["eta"] = {"method": "zeta-extrapolated", "s_grid": [3.0, 2.5, 2.0, 1.5, 1.0]}
    cfg = write_config(tmp_path, raw)
    out = tmp_path / "eta.json"
    assert run_cli(["eta", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["method"] == "zeta-extrapolated"
