"""Flat hermitian bundles over T^n presented by commuting unitary holonomies.

The fundamental group Z^n is abelian, so every flat unitary bundle splits
into flat line bundles; we store only the holonomy angles theta (an N x n
matrix with entries in [0,1)).  Channel ``a`` twists Fourier modes by
exp(2*pi*i*(k + theta_a) . x), and the canonical flat connection acts on a
basis element by wedging with 2*pi*i*(k + theta_a) . dx.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exterior
from .errors import ConfigInvalid

COMMUTATOR_TOL = 1e-10


@dataclass(frozen=True)
class FlatBundle:
    """Flat unitary bundle in the simultaneously diagonalized frame."""

    angles: tuple  # N x n, entries in [0, 1)

    def __init__(self, angles):
        A = np.atleast_2d(np.asarray(angles, dtype=float))
        if A.size == 0:
            raise ValueError("bundle must have rank >= 1")
        A = np.mod(A, 1.0)
        A[np.isclose(A, 1.0, atol=1e-15)] = 0.0
        object.__setattr__(self, "angles", tuple(map(tuple, A)))

    @property
    def rank(self):
        return len(self.angles)

    @property
    def n(self):
        return len(self.angles[0])

    @property
    def theta(self):
        return np.asarray(self.angles, dtype=float)

    def is_trivial_line(self):
        return self.rank == 1 and not np.any(self.theta)

    def channel_angles(self, a):
        return np.asarray(self.angles[a], dtype=float)

    def dual(self):
        """Dual bundle: holonomy angles negated mod 1."""
        return FlatBundle(np.mod(-self.theta, 1.0))

    # the conjugate bundle coincides with the dual for unitary holonomies
    conjugate = dual

    def direct_sum(self, other):
        if self.n != other.n:
            raise ValueError("direct sum factors must share the base torus")
        return FlatBundle(np.vstack([self.theta, other.theta]))

    def conjugation_partner(self, a, tol=1e-12):
        """Channel index b with theta_b = -theta_a (mod 1), or None."""
        target = np.mod(-self.channel_angles(a), 1.0)
        target[np.isclose(target, 1.0, atol=1e-12)] = 0.0
        for b in range(self.rank):
            if np.allclose(self.channel_angles(b), target, atol=tol):
                return b
        return None


def trivial_bundle(n, rank=1):
    return FlatBundle(np.zeros((rank, n)))


def bundle_from_unitaries(mats, pointer="/bundle/holonomy"):
    """Simultaneously diagonalize commuting unitary holonomy generators.

    ``mats`` is a list of n complex N x N matrices.  Verifies unitarity and
    pairwise commutators to 1e-10, then extracts holonomy angles from the
    joint eigenbasis.  Diagonalization is deterministic (fixed mixing
    coefficients).
    """
    us = [np.asarray(m, dtype=complex) for m in mats]
    N = us[0].shape[0]
    for i, U in enumerate(us):
        if U.shape != (N, N):
            raise ConfigInvalid(f"{pointer}/{i}", "holonomy matrices must share one size")
        if np.max(np.abs(U @ U.conj().T - np.eye(N))) > 1e-8:
            raise ConfigInvalid(f"{pointer}/{i}", "holonomy matrix is not unitary")
    for i in range(len(us)):
        for j in range(i + 1, len(us)):
            d = np.max(np.abs(us[i] @ us[j] - us[j] @ us[i]))
            if d > COMMUTATOR_TOL:
                raise ConfigInvalid(
                    pointer, f"holonomies {i} and {j} fail to commute (defect {d:.2e})"
                )
    # deterministic generic hermitian combination of the generators
    weights = [np.pi ** (k + 1) % 1 + 0.5 for k in range(len(us))]
    Hgen = sum(w * (U + U.conj().T) + (w ** 2) * 1j * (U - U.conj().T)
               for w, U in zip(weights, us))
    _, V = np.linalg.eigh(Hgen)
    angles = np.zeros((N, len(us)))
    for j, U in enumerate(us):
        D = V.conj().T @ U @ V
        off = np.max(np.abs(D - np.diag(np.diag(D))))
        if off > 1e-8:
            raise ConfigInvalid(pointer, f"joint diagonalization failed (off-diag {off:.2e})")
        angles[:, j] = np.mod(np.angle(np.diag(D)) / (2 * np.pi), 1.0)
    order = np.lexsort(angles.T[::-1])
    return FlatBundle(angles[order])


def flat_differential(form: "exterior.Form") -> "exterior.Form":
    """Canonical flat twisted exterior derivative.

    On a basis element with mode (k, a) this wedges with
    2*pi*i * sum_j (k_j + theta_{a,j}) dx_j and squares to zero exactly.
    """
    amb = form.ambient
    theta = amb.bundle.theta
    out = {}
    for (k, a, I), c in form.coeffs.items():
        xi = 2j * np.pi * (np.asarray(k, dtype=float) + theta[a])
        for j in range(amb.n):
            if xi[j] == 0:
                continue
            s, K = exterior.wedge_sign((j,), I)
            if not s:
                continue
            key = (k, a, K)
            out[key] = out.get(key, 0.0) + s * xi[j] * c
    return exterior.Form(amb, out)
