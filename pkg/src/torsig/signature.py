"""Signature theory on even-dimensional flat tori.

The involution tau = i^{m + p(p-1)} star squares to the identity on a
2m-torus.  For admissible flux (degree-3 components real, degree-5
imaginary, ...) the twisted signature operator B = d_H + d_H^dagger
anticommutes with tau, so tau preserves the twisted harmonic space and
splits it into +/- eigenspaces whose dimension difference is the twisted
signature.

The sesquilinear signature form used here is, on the harmonic space of the
rescaled flux H^(lambda) with |lambda| = 1,

    F_lambda(w, w') = sum_p i^{m + p(p-1)} lambda^{m-p}
                      integral of w_p ^ conj(w'_{2m-p}),

a hermitian form whose lambda = 1 member is positive on the tau = +1
harmonics and negative on the tau = -1 harmonics; its signature is
independent of lambda because F_lambda is the pullback of F_1 under the
unitary degree rescaling c_conj(lambda).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blockops, complexes, exterior
from .errors import DegenerateForm, OddDimension, TauNotPreserving

TAU_PRESERVE_TOL = 1e-8
FORM_DEGENERACY_TOL = 1e-8


def _check_even(n):
    if n % 2:
        raise OddDimension(f"signature theory requires even dimension, got {n}")
    return n // 2


def tau_matrix(metric):
    """Full-basis matrix of tau = i^{m + p(p-1)} star on a 2m-torus."""
    m = _check_even(metric.n)
    S = exterior.star_matrix(metric).astype(complex)
    Ph = blockops.diag_degree_phase(metric.n, lambda p: 1j ** ((m + p * (p - 1)) % 4))
    return S @ Ph


def tau(form: exterior.Form) -> exterior.Form:
    """Apply the signature involution to a form."""
    M = tau_matrix(form.ambient.metric)
    basis = exterior.basis_indices(form.ambient.n)
    pos = exterior.basis_position(form.ambient.n)
    out = {}
    for (k, a, I), c in form.coeffs.items():
        col = M[:, pos[I]]
        for row in np.nonzero(col)[0]:
            key = (k, a, basis[row])
            out[key] = out.get(key, 0.0) + c * col[row]
    return exterior.Form(form.ambient, out)


def signature_operator(metric, flat_bundle, flux, K):
    """B = d_H + d_H^dagger as a block family (constant admissible flux)."""
    d = complexes.twisted_differential(metric, flat_bundle, flux, K)
    adj = complexes.adjoint_twisted_differential(metric, flat_bundle, flux, K)
    B = d + adj
    B.label = "signature_operator"
    return B


@dataclass
class AdmissibilityReport:
    defect: float
    admissible: bool
    flux_norm: float

    def to_json(self):
        return {
            "defect": self.defect,
            "admissible": self.admissible,
            "flux_norm": self.flux_norm,
        }


def anticommutation_defect(metric, flat_bundle, flux, K) -> AdmissibilityReport:
    """Operator norm of B tau + tau B over blocks within K, together with
    the structural admissibility flag of the flux."""
    _check_even(metric.n)
    B = signature_operator(metric, flat_bundle, flux, K)
    T = tau_matrix(metric)
    anti = B.map(lambda M, a: M @ T + T @ M)
    worst = 0.0
    for M in anti.mats.values():
        worst = max(worst, float(np.max(np.linalg.norm(M, ord=2, axis=(1, 2)))))
    return AdmissibilityReport(
        defect=worst,
        admissible=flux.is_admissible(),
        flux_norm=flux.l2_norm(metric),
    )


@dataclass
class SignatureResult:
    signature: int
    dim_plus: int
    dim_minus: int
    form: str
    lam: complex
    min_abs_eigenvalue: float

    def to_json(self):
        return {
            "signature": self.signature,
            "dim_plus": self.dim_plus,
            "dim_minus": self.dim_minus,
            "form": self.form,
            "lambda": [self.lam.real, self.lam.imag],
            "min_abs_eigenvalue": self.min_abs_eigenvalue,
        }


def _harmonic_basis(metric, flat_bundle, flux, K):
    coh = complexes.twisted_cohomology(metric, flat_bundle, flux, K)
    return coh, coh.harmonic_even + coh.harmonic_odd


def hermitian_form(metric, flat_bundle, flux, lam, K) -> SignatureResult:
    """Signature of the hermitian intersection form on the harmonic space
    of the rescaled flux H^(lambda)."""
    m = _check_even(metric.n)
    if abs(abs(lam) - 1.0) > 1e-12:
        raise ValueError("the signature form requires |lambda| = 1")
    if not flux.is_admissible():
        raise ValueError("the signature form requires admissible flux")
    _, reps = _harmonic_basis(metric, flat_bundle, flux.rescale(lam), K)
    N = len(reps)
    F = np.zeros((N, N), dtype=complex)
    for i, w in enumerate(reps):
        for j, e in enumerate(reps):
            val = 0.0 + 0.0j
            for p in range(0, 2 * m + 1):
                wp = w.degree_component(p)
                eq = e.degree_component(2 * m - p)
                if not wp.coeffs or not eq.coeffs:
                    continue
                phase = (1j ** ((m + p * (p - 1)) % 4)) * lam ** (m - p)
                val += phase * exterior.hermitian_pairing(wp, eq)
            F[i, j] = val
    herm_defect = float(np.max(np.abs(F - F.conj().T))) if N else 0.0
    F = 0.5 * (F + F.conj().T)
    if N:
        ev = np.linalg.eigvalsh(F)
        scale = max(float(np.max(np.abs(ev))), 1.0)
        if np.min(np.abs(ev)) < FORM_DEGENERACY_TOL * scale:
            raise DegenerateForm(
                f"signature form has near-zero eigenvalue {np.min(np.abs(ev)):.3e} "
                f"(hermitian defect {herm_defect:.3e})"
            )
        plus = int(np.sum(ev > 0))
        minus = int(np.sum(ev < 0))
        min_abs = float(np.min(np.abs(ev)))
    else:
        plus = minus = 0
        min_abs = float("inf")
    return SignatureResult(plus - minus, plus, minus, "intersection", complex(lam), min_abs)


def _tau_restriction(reps, metric):
    """Matrix of tau restricted to the span of orthonormal harmonics, plus
    the worst leakage outside the span."""
    N = len(reps)
    T = np.zeros((N, N), dtype=complex)
    leak = 0.0
    for j, w in enumerate(reps):
        tw = tau(w)
        for i, e in enumerate(reps):
            T[i, j] = exterior.inner_product(tw, e)
        out2 = exterior.inner_product(tw, tw).real - float(np.sum(np.abs(T[:, j]) ** 2))
        leak = max(leak, abs(out2))
    return T, leak


def harmonic_splitting_signature(metric, flat_bundle, flux, K) -> SignatureResult:
    """Signature as dim of the tau = +1 minus the tau = -1 harmonics.

    For admissible flux, tau commutes with the twisted Laplacian of H
    itself, so the splitting is computed on the harmonic space of H (the
    lambda = 1 member of the scaling family, where the intersection form is
    definite on each tau eigenspace).
    """
    _check_even(metric.n)
    if not flux.is_admissible():
        raise TauNotPreserving("harmonic splitting requires admissible flux")
    _, reps = _harmonic_basis(metric, flat_bundle, flux, K)
    T, leak = _tau_restriction(reps, metric)
    if leak > TAU_PRESERVE_TOL:
        raise TauNotPreserving(
            f"tau does not preserve the harmonic space (leakage {leak:.3e})"
        )
    if len(reps):
        ev = np.linalg.eigvalsh(0.5 * (T + T.conj().T))
        plus = int(np.sum(ev > 0.5))
        minus = int(np.sum(ev < -0.5))
        if plus + minus != len(reps):
            raise TauNotPreserving(
                f"tau restriction is not an involution: eigenvalues {ev}"
            )
    else:
        plus = minus = 0
    return SignatureResult(plus - minus, plus, minus, "tau_splitting", 1.0,
                           float("nan"))


def index_split_check(metric, flat_bundle, flux, K):
    """Indices of the signature operator restricted to even and odd forms.

    With H the harmonic space, Sign the tau-splitting signature and chi the
    graded Euler characteristic, the two restrictions satisfy

        Index(even) = dim(H ^ even ^ tau+) - dim(H ^ odd ^ tau-) = (Sign + chi)/2
        Index(odd)  = dim(H ^ odd ^ tau+) - dim(H ^ even ^ tau-) = (Sign - chi)/2
    """
    _check_even(metric.n)
    coh, reps = _harmonic_basis(metric, flat_bundle, flux, K)
    n_even = len(coh.harmonic_even)
    T, leak = _tau_restriction(reps, metric)
    if leak > TAU_PRESERVE_TOL:
        raise TauNotPreserving(
            f"tau does not preserve the harmonic space (leakage {leak:.3e})"
        )
    counts = {}
    for parity, sl in (("even", slice(0, n_even)), ("odd", slice(n_even, len(reps)))):
        Tp = T[sl, sl]
        if Tp.size:
            ev = np.linalg.eigvalsh(0.5 * (Tp + Tp.conj().T))
            counts[(parity, "+")] = int(np.sum(ev > 0.5))
            counts[(parity, "-")] = int(np.sum(ev < -0.5))
        else:
            counts[(parity, "+")] = counts[(parity, "-")] = 0
    index_even = counts[("even", "+")] - counts[("odd", "-")]
    index_odd = counts[("odd", "+")] - counts[("even", "-")]
    chi = coh.euler
    sign = (counts[("even", "+")] + counts[("odd", "+")]
            - counts[("even", "-")] - counts[("odd", "-")])
    return {
        "index_even": index_even,
        "index_odd": index_odd,
        "chi": chi,
        "signature": sign,
        "identity_even": index_even * 2 == sign + chi,
        "identity_odd": index_odd * 2 == sign - chi,
        "consistency_sum": index_even + index_odd == sign,
        "counts": {f"{p}{s}": v for (p, s), v in counts.items()},
    }
