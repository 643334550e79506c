"""Per-mode matrix realizations of the twisted operators.

For translation-invariant flux every operator built here is block diagonal
over (mode, channel); a ``BlockFamily`` stores, per channel, a stacked
array of shape (#modes, 2^n, 2^n) acting on the full multi-index basis in
the ordering of :func:`torsig.exterior.basis_indices`.

Matrices act on coefficient vectors in the coordinate dx_I frame.  The
hermitian structure is carried by the Gram matrix; ``to_ortho`` maps a
family to the orthonormal frame where adjoints are plain conjugate
transposes and ``numpy.linalg.eigh`` applies.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import exterior
from .errors import AmbientMismatch


def mode_ball(n, K):
    """Deterministically ordered sup-norm ball of lattice modes."""
    rng = range(-K, K + 1)
    return [tuple(m) for m in itertools.product(rng, repeat=n)]


def even_positions(n):
    return np.array([i for i, I in enumerate(exterior.basis_indices(n)) if len(I) % 2 == 0])


def odd_positions(n):
    return np.array([i for i, I in enumerate(exterior.basis_indices(n)) if len(I) % 2 == 1])


def wedge_stack(n):
    """Stack of the n single-axis wedge matrices dx_j ^ (.)."""
    return np.stack([exterior.wedge_matrix(n, (j,)) for j in range(n)])


@dataclass
class BlockFamily:
    """Block-diagonal operator family over a shared mode list."""

    ambient: exterior.Ambient
    modes: list
    mats: dict  # channel -> (B, m, m) complex array
    label: str = ""

    @property
    def n(self):
        return self.ambient.n

    @property
    def dim(self):
        return 2 ** self.n

    def _align(self, other):
        if self.ambient.metric != other.ambient.metric or self.modes != other.modes:
            raise AmbientMismatch("block families are not aligned")

    def map(self, fn, label=None):
        return BlockFamily(
            self.ambient, self.modes,
            {a: fn(M, a) for a, M in self.mats.items()},
            label if label is not None else self.label,
        )

    def __add__(self, other):
        self._align(other)
        return self.map(lambda M, a: M + other.mats[a])

    def __sub__(self, other):
        self._align(other)
        return self.map(lambda M, a: M - other.mats[a])

    def __matmul__(self, other):
        self._align(other)
        return self.map(lambda M, a: M @ other.mats[a])

    def scale(self, c):
        return self.map(lambda M, a: c * M)

    def max_abs(self):
        return max(float(np.max(np.abs(M))) for M in self.mats.values())

    # -- hermitian structure ------------------------------------------------
    def gram(self):
        return exterior.gram_matrix(self.ambient.metric)

    def dagger(self):
        """Adjoint with respect to the Gram matrix: G^{-1} A^H G per block."""
        G = self.gram()
        Ginv = np.linalg.inv(G)
        return self.map(lambda M, a: Ginv @ np.conj(np.swapaxes(M, -1, -2)) @ G,
                        label=self.label + "^dagger")

    def hermiticity_defect(self):
        return (self - self.dagger()).max_abs()

    def to_ortho(self):
        """Conjugate every block into the metric-orthonormal frame."""
        R = exterior.gram_factor(self.ambient.metric)
        Rinv = np.linalg.inv(R)
        return self.map(lambda M, a: R @ M @ Rinv)

    def restrict(self, positions):
        ix = np.asarray(positions)
        return self.map(lambda M, a: M[:, ix[:, None], ix[None, :]])

    def eigh(self, positions=None):
        """Batched hermitian eigendecomposition in the orthonormal frame.

        Returns dict channel -> (vals (B, d), vecs (B, d, d)); eigenvector
        columns are orthonormal coefficients in the orthonormal frame.
        """
        ortho = self.to_ortho()
        if positions is not None:
            ortho = ortho.restrict(positions)
        out = {}
        for a, M in ortho.mats.items():
            Mh = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
            out[a] = np.linalg.eigh(Mh)
        return out

    def eigvals(self, positions=None):
        return {a: vw[0] for a, vw in self.eigh(positions).items()}

    # -- forms ----------------------------------------------------------------
    def apply(self, form: exterior.Form) -> exterior.Form:
        """Apply to a sparse form (modes must lie in the family's ball)."""
        basis = exterior.basis_indices(self.n)
        pos = exterior.basis_position(self.n)
        mode_pos = {m: i for i, m in enumerate(self.modes)}
        out = {}
        # gather coefficient vectors per (mode, channel)
        vecs = {}
        for (k, a, I), c in form.coeffs.items():
            v = vecs.setdefault((k, a), np.zeros(self.dim, dtype=complex))
            v[pos[I]] += c
        for (k, a), v in vecs.items():
            if k not in mode_pos:
                raise AmbientMismatch(f"mode {k} outside the operator's ball")
            w = self.mats[a][mode_pos[k]] @ v
            for i in np.nonzero(w)[0]:
                key = (k, a, basis[i])
                out[key] = out.get(key, 0.0) + w[i]
        return exterior.Form(self.ambient, out)

    def block(self, mode, channel=0):
        return self.mats[channel][self.modes.index(tuple(mode))]


def xi_array(ambient, modes, channel):
    """Stack of twisted frequency covectors 2*pi*(k + theta_a)."""
    theta = ambient.bundle.channel_angles(channel)
    K = np.asarray(modes, dtype=float)
    return 2.0 * np.pi * (K + theta[None, :])


def assemble(ambient, per_channel, label=""):
    """Build a family from a function channel -> (B, m, m)."""
    modes = mode_ball(ambient.n, ambient.trunc)
    mats = {a: per_channel(a, modes) for a in range(ambient.bundle.rank)}
    return BlockFamily(ambient, modes, mats, label)


def derivative_family(ambient, flux_matrix=None, label="d"):
    """Twisted exterior derivative blocks: i * xi . W + (constant flux wedge)."""
    n = ambient.n
    W = wedge_stack(n)

    def build(a, modes):
        xi = xi_array(ambient, modes, a)
        D = 1j * np.einsum("bj,jkl->bkl", xi, W)
        if flux_matrix is not None:
            D = D + flux_matrix[None, :, :]
        return D

    return assemble(ambient, build, label)


def diag_degree_phase(n, phase_fn):
    degs = exterior.degree_array(n)
    return np.diag([phase_fn(int(p)) for p in degs]).astype(complex)


def scaling_matrix(n, lam):
    """c_lambda: multiplication by lambda^{floor(p/2)} on p-forms."""
    return diag_degree_phase(n, lambda p: lam ** (p // 2))
