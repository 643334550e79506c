"""Command line entry point.

Commands take a structured JSON configuration (see README) and write
deterministic JSON or CSV results.  Exit codes: 0 success, 1 configuration
error, 2 numerical assertion failure; either failure writes a machine
readable error object to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

COMMANDS = (
    "betti", "signature", "eta", "rho", "spectral-flow", "aps-index",
    "interval-cohomology", "heat-trace", "alpha0", "verify", "report",
)


def _build_parser():
    p = argparse.ArgumentParser(
        prog="torsig",
        description="Twisted Hodge theory and spectral invariants on flat tori",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="path to a JSON run configuration")
    p.add_argument("--out", required=True,
                   help="output file (directory for the report command)")
    p.add_argument("--threads", type=int, default=0,
                   help="BLAS thread cap (0 keeps the environment default)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the randomized checks inside verify")
    return p


def _emit_error(kind, message, pointer=None):
    payload = {"error": kind, "message": str(message)}
    if pointer is not None:
        payload["pointer"] = pointer
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from . import errors
    from .config import RunConfig

    try:
        cfg = RunConfig.from_path(args.config)
        result = _dispatch(args.command, cfg, args)
    except errors.ConfigInvalid as exc:
        _emit_error("ConfigInvalid", exc, pointer=exc.pointer)
        return 1
    except errors.NumericalAssertion as exc:
        _emit_error(type(exc).__name__, exc)
        return 2
    except errors.TorsigError as exc:
        _emit_error(type(exc).__name__, exc)
        return 2
    except OSError as exc:
        _emit_error("IOError", exc)
        return 1
    return result


def _dispatch(command, cfg, args):
    from . import jsonio

    if command == "heat-trace":
        rows = _run_heat_trace(cfg)
        jsonio.write_csv(args.out, ["t", "value", "method", "tail_bound"], rows)
        return 0
    if command == "report":
        from . import report

        report.render(cfg, args.out)
        return 0
    if command == "verify":
        from . import verify

        payload = verify.run_all(seed=args.seed)
        jsonio.write_json(args.out, payload)
        return 0 if payload["all_pass"] else 2

    payload = _run_single(command, cfg)
    jsonio.write_json(args.out, payload)
    return 0


def _run_single(command, cfg):
    from . import complexes, cylinder, heat, signature, spectral

    metric, fb, flux = cfg.build()
    K = cfg.truncation
    if command == "betti":
        coh = complexes.twisted_cohomology(metric, fb, flux, K)
        return coh.to_json()
    if command == "signature":
        lam_pair = cfg.signature_opts.get("lambda", [1.0, 0.0])
        lam = complex(lam_pair[0], lam_pair[1])
        rep = signature.anticommutation_defect(metric, fb, flux, K)
        res = signature.hermitian_form(metric, fb, flux, lam, K)
        split = signature.harmonic_splitting_signature(metric, fb, flux, K)
        out = res.to_json()
        out["defect"] = rep.defect
        out["splitting_signature"] = split.signature
        out.pop("min_abs_eigenvalue", None)
        out.pop("form", None)
        return out
    if command == "eta":
        op = spectral.odd_signature_operator(metric, fb, flux, K)
        s_grid = tuple(cfg.eta_opts.get("s_grid", spectral.S_GRID))
        est = spectral.eta_invariant(op, method=cfg.eta_opts.get("method", "auto"),
                                     s_grid=s_grid)
        return est.to_json()
    if command == "rho":
        rho, eta_tw, eta_triv = spectral.rho_invariant(
            metric, fb, flux, K, method=cfg.eta_opts.get("method", "auto"),
            s_grid=tuple(cfg.eta_opts.get("s_grid", spectral.S_GRID)))
        out = rho.to_json()
        out["eta_twisted"] = eta_tw.to_json()
        out["eta_trivial"] = eta_triv.to_json()
        return out
    if command == "spectral-flow":
        opts = cfg.flow_opts
        res = spectral.spectral_flow(
            metric, fb, flux, K,
            steps=int(opts.get("steps", 64)),
            u0=float(opts.get("u0", 0.0)),
            u1=float(opts.get("u1", 1.0)),
        )
        return res.to_json()
    if command == "aps-index":
        L = float(cfg.cylinder_opts.get("length", 1.0))
        prob = cylinder.CylinderProblem(metric, fb, flux, L, K)
        return cylinder.aps_cylinder_index(prob).to_json()
    if command == "interval-cohomology":
        L = float(cfg.cylinder_opts.get("length", 1.0))
        cond = cfg.interval_opts.get("condition", "absolute")
        prob = cylinder.CylinderProblem(metric, fb, flux, L, K)
        return cylinder.interval_cohomology(prob, cond)
    if command == "alpha0":
        t_grid = tuple(cfg.heat_opts.get("t_grid", heat.DEFAULT_T_GRID))
        fit = heat.signature_alpha0(metric, fb, flux, K, t_grid)
        return {
            "alpha0": fit["alpha0"],
            "residual": fit["residual"],
            "condition": fit["condition"],
            "coefficients": {str(k): v for k, v in fit["coefficients"].items()},
        }
    raise AssertionError(f"unhandled command {command}")


def _run_heat_trace(cfg):
    from . import heat

    metric, fb, flux = cfg.build()
    t_grid = tuple(cfg.heat_opts.get("t_grid", [0.05, 0.1, 0.2, 0.5, 1.0]))
    K = cfg.truncation
    rows = []
    ei = heat.heat_trace_eigen(metric, fb, flux, t_grid, K)
    for r in ei.to_rows():
        rows.append([r["t"], r["value"], r["method"], r["tail_bound"]])
    if flux.is_zero():
        im = heat.heat_trace_images(metric, fb, t_grid)
        for r in im.to_rows():
            rows.append([r["t"], r["value"], r["method"], r["tail_bound"]])
    return rows


if __name__ == "__main__":
    sys.exit(main())
