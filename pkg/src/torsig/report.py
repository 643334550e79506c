"""Figure rendering for the report command.

Consumes a run configuration, recomputes the headline diagnostics, and
writes matplotlib figures next to the delimited data they were drawn
from.  The compute commands stay figure free; this path is strictly
downstream of them.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import blockops, complexes, exterior, heat, jsonio, spectral


def render(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    metric, fb, flux = cfg.build()
    K = cfg.truncation
    manifest = {"figures": [], "tables": []}

    _heat_panel(cfg, metric, fb, flux, K, outdir, manifest)
    _eta_panel(cfg, metric, fb, flux, K, outdir, manifest)
    _flow_panel(cfg, metric, fb, flux, K, outdir, manifest)
    _alpha0_panel(cfg, metric, fb, flux, K, outdir, manifest)

    jsonio.write_json(os.path.join(outdir, "manifest.json"), manifest)
    return manifest


def _save(fig, outdir, name, manifest):
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    manifest["figures"].append(name)


def _heat_panel(cfg, metric, fb, flux, K, outdir, manifest):
    t_grid = tuple(cfg.heat_opts.get("t_grid", list(heat.DEFAULT_T_GRID)))
    ei = heat.heat_trace_eigen(metric, fb, flux, t_grid, max(K, 6))
    rows = [[r["t"], r["value"], r["method"], r["tail_bound"]] for r in ei.to_rows()]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].loglog(t_grid, ei.values, "o-", label="eigenvalue sum")
    if flux.is_zero():
        im = heat.heat_trace_images(metric, fb, t_grid)
        rows += [[r["t"], r["value"], r["method"], r["tail_bound"]]
                 for r in im.to_rows()]
        axes[0].loglog(t_grid, im.values, "x--", label="images sum")
        rel = [abs(a - b) / abs(b) for a, b in zip(ei.values, im.values)]
        axes[1].semilogy(t_grid, rel, "s-")
        axes[1].set_title("relative difference")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("heat trace")
    axes[0].legend()
    axes[1].set_xlabel("t")
    jsonio.write_csv(os.path.join(outdir, "heat_trace.csv"),
                     ["t", "value", "method", "tail_bound"], rows)
    manifest["tables"].append("heat_trace.csv")
    _save(fig, outdir, "heat_trace.png", manifest)


def _eta_panel(cfg, metric, fb, flux, K, outdir, manifest):
    if metric.n % 2 == 0:
        return
    op = spectral.odd_signature_operator(metric, fb, flux, K)
    s_grid = np.asarray(spectral.S_GRID)
    sums, small = spectral._signed_partial_sums(op, s_grid)
    value, err = spectral._extrapolate_to_zero(s_grid, sums)
    value += small
    X = np.vander(s_grid, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(X, sums, rcond=None)
    ss = np.linspace(0, max(s_grid), 100)
    fit = np.vander(ss, 3, increasing=True) @ coef
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(s_grid, sums, "o", label="partial sums")
    ax.plot(ss, fit, "-", label="quadratic fit")
    ax.errorbar([0], [value], yerr=[err], fmt="s", capsize=4, label="extrapolation")
    ax.set_xlabel("s")
    ax.set_ylabel("signed spectral sum")
    ax.legend()
    jsonio.write_csv(os.path.join(outdir, "eta_partial_sums.csv"),
                     ["s", "partial_sum"],
                     [[float(s), float(v)] for s, v in zip(s_grid, sums)])
    manifest["tables"].append("eta_partial_sums.csv")
    _save(fig, outdir, "eta_extrapolation.png", manifest)


def _flow_panel(cfg, metric, fb, flux, K, outdir, manifest):
    if metric.n % 2 == 0 or flux.is_zero():
        return
    steps = int(cfg.flow_opts.get("steps", 32))
    base, d1 = spectral._path_blocks(metric, fb, flux, min(K, 2))
    R = exterior.gram_factor(metric)
    Rinv = np.linalg.inv(R)
    n = metric.n
    us = np.linspace(0.0, 1.0, steps + 1)
    A0 = spectral._even_restrict(
        np.einsum("ij,bjk,kl->bil", R, base.mats[0], Rinv), n)
    A1 = spectral._even_restrict(
        np.einsum("ij,bjk,kl->bil", R, d1.mats[0], Rinv), n)
    tracks = []
    for u in us:
        vals = np.linalg.eigvalsh(0.5 * (A0 + u * A1
                                         + np.conj(np.swapaxes(A0 + u * A1, -1, -2))))
        flat = np.sort(vals.reshape(-1))
        m = len(flat) // 2
        tracks.append(flat[max(0, m - 4): m + 4])
    tracks = np.asarray(tracks)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for j in range(tracks.shape[1]):
        ax.plot(us, tracks[:, j], "-", lw=1)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("u")
    ax.set_ylabel("eigenvalues near zero")
    jsonio.write_csv(os.path.join(outdir, "flow_tracks.csv"),
                     ["u"] + [f"lam{j}" for j in range(tracks.shape[1])],
                     [[float(u)] + [float(x) for x in row]
                      for u, row in zip(us, tracks)])
    manifest["tables"].append("flow_tracks.csv")
    _save(fig, outdir, "spectral_flow.png", manifest)


def _alpha0_panel(cfg, metric, fb, flux, K, outdir, manifest):
    if metric.n % 2 == 1:
        return
    t_grid = tuple(cfg.heat_opts.get("t_grid", list(heat.DEFAULT_T_GRID)))
    fit = heat.signature_alpha0(metric, fb, flux, K, t_grid)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogx(t_grid, fit["supertrace"], "o-")
    ax.axhline(fit["alpha0"], color="r", lw=0.8,
               label=f"constant term {fit['alpha0']:.2e}")
    ax.set_xlabel("t")
    ax.set_ylabel("graded supertrace")
    ax.legend()
    jsonio.write_csv(os.path.join(outdir, "alpha0_supertrace.csv"),
                     ["t", "supertrace"],
                     [[float(t), float(v)] for t, v in zip(t_grid, fit["supertrace"])])
    manifest["tables"].append("alpha0_supertrace.csv")
    _save(fig, outdir, "alpha0_fit.png", manifest)
