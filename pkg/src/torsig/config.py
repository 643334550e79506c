"""Run configuration: parsing and validation with JSON-pointer errors."""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigInvalid


def _require(cond, pointer, message):
    if not cond:
        raise ConfigInvalid(pointer, message)


def _get(obj, key, pointer, typ=None, required=True, default=None):
    if key not in obj:
        if required:
            raise ConfigInvalid(f"{pointer}/{key}", "missing required field")
        return default
    val = obj[key]
    if typ is not None and not isinstance(val, typ):
        raise ConfigInvalid(f"{pointer}/{key}",
                            f"expected {getattr(typ, '__name__', typ)}")
    return val


class RunConfig:
    """Validated run configuration.

    The geometry fields (manifold, bundle, flux, truncation) are required;
    command-specific sections (eta, spectral_flow, cylinder, heat,
    signature, interval) are optional with documented defaults.
    """

    def __init__(self, raw):
        self.raw = raw
        _require(isinstance(raw, dict), "", "configuration must be an object")

        man = _get(raw, "manifold", "", dict)
        self.dim = _get(man, "dim", "/manifold", int)
        _require(1 <= self.dim <= 6, "/manifold/dim", "dimension must be in 1..6")
        metric = _get(man, "metric", "/manifold", list)
        _require(len(metric) == self.dim ** 2, "/manifold/metric",
                 f"expected {self.dim ** 2} row-major entries")
        G = np.asarray(metric, dtype=float).reshape(self.dim, self.dim)
        _require(np.allclose(G, G.T, atol=1e-12), "/manifold/metric",
                 "metric must be symmetric")
        _require(float(np.min(np.linalg.eigvalsh(G))) > 0, "/manifold/metric",
                 "metric must be positive definite")
        self.metric_matrix = G
        self.volume_note = man.get("volume_note", "")

        bun = _get(raw, "bundle", "", dict)
        self.rank = _get(bun, "rank", "/bundle", int)
        _require(self.rank >= 1, "/bundle/rank", "rank must be >= 1")
        self.holonomy_angles = None
        self.holonomy_unitaries = None
        if "holonomy" in bun:
            H = _get(bun, "holonomy", "/bundle", list)
            A = np.asarray(H, dtype=float)
            _require(A.shape == (self.rank, self.dim), "/bundle/holonomy",
                     f"expected a {self.rank} x {self.dim} angle matrix")
            self.holonomy_angles = A
        elif "unitaries" in bun:
            U = _get(bun, "unitaries", "/bundle", list)
            _require(len(U) == self.dim, "/bundle/unitaries",
                     f"expected {self.dim} generator matrices")
            mats = []
            for i, m in enumerate(U):
                arr = np.asarray(m, dtype=complex)
                _require(arr.shape == (self.rank, self.rank),
                         f"/bundle/unitaries/{i}",
                         f"expected a {self.rank} x {self.rank} matrix")
                mats.append(arr)
            self.holonomy_unitaries = mats
        else:
            self.holonomy_angles = np.zeros((self.rank, self.dim))

        self.flux_components = []
        flux = raw.get("flux", {"components": []})
        _require(isinstance(flux, dict), "/flux", "expected an object")
        comps = flux.get("components", [])
        _require(isinstance(comps, list), "/flux/components", "expected a list")
        for ci, comp in enumerate(comps):
            ptr = f"/flux/components/{ci}"
            _require(isinstance(comp, dict), ptr, "expected an object")
            deg = _get(comp, "degree", ptr, int)
            _require(deg % 2 == 1, f"{ptr}/degree", "flux degrees must be odd")
            _require(deg >= 3, f"{ptr}/degree",
                     "degree-1 flux must be absorbed into the holonomy")
            _require(deg <= self.dim, f"{ptr}/degree",
                     "flux degree exceeds the dimension")
            terms = _get(comp, "terms", ptr, list)
            for ti, term in enumerate(terms):
                tptr = f"{ptr}/terms/{ti}"
                _require(isinstance(term, dict), tptr, "expected an object")
                mi = _get(term, "multi_index", tptr, list)
                _require(len(mi) == deg and len(set(mi)) == deg, f"{tptr}/multi_index",
                         f"expected {deg} distinct axes")
                _require(all(isinstance(i, int) and 1 <= i <= self.dim for i in mi),
                         f"{tptr}/multi_index", f"axes must be in 1..{self.dim}")
                mode = term.get("mode", [0] * self.dim)
                _require(isinstance(mode, list) and len(mode) == self.dim
                         and all(isinstance(x, int) for x in mode),
                         f"{tptr}/mode", f"expected {self.dim} integers")
                re = term.get("re", 0.0)
                im = term.get("im", 0.0)
                _require(isinstance(re, (int, float)) and isinstance(im, (int, float)),
                         f"{tptr}/re", "coefficients must be numbers")
                self.flux_components.append(
                    (deg, tuple(i - 1 for i in mi), tuple(mode), complex(re, im))
                )

        self.truncation = _get(raw, "truncation", "", int, required=False, default=3)
        _require(self.truncation >= 0, "/truncation", "truncation must be >= 0")

        self.eta_opts = raw.get("eta", {})
        self.flow_opts = raw.get("spectral_flow", {})
        self.cylinder_opts = raw.get("cylinder", {})
        self.heat_opts = raw.get("heat", {})
        self.signature_opts = raw.get("signature", {})
        self.interval_opts = raw.get("interval", {})

    # -- builders ----------------------------------------------------------
    def build(self):
        """Instantiate (metric, bundle, flux)."""
        from . import bundle as bundle_mod, complexes, exterior

        metric = exterior.FlatMetric(self.metric_matrix)
        if self.holonomy_unitaries is not None:
            fb = bundle_mod.bundle_from_unitaries(self.holonomy_unitaries)
        else:
            fb = bundle_mod.FlatBundle(self.holonomy_angles)
        comps = {}
        for deg, index, mode, c in self.flux_components:
            comps.setdefault(deg, {})
            key = (mode, index)
            comps[deg][key] = comps[deg].get(key, 0.0) + c
        try:
            flux = complexes.FluxForm(self.dim, comps)
        except ValueError as exc:
            raise ConfigInvalid("/flux", str(exc)) from exc
        return metric, fb, flux

    @classmethod
    def from_path(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("", f"invalid JSON: {exc}") from exc
        return cls(raw)
