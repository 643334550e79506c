"""Complex exterior algebra on a flat torus, at the level of Fourier modes.

Forms are finite linear combinations of basis elements

    e_{k,a} dx_I := exp(2*pi*i*(k + theta_a) . x) dx_I

where ``k`` is an integer lattice vector, ``a`` indexes a bundle channel
with holonomy angles ``theta_a`` (see :mod:`torsig.bundle`), and ``I`` is a
strictly increasing tuple of axis indices.  The orientation is fixed once
and for all: dx_0 ^ dx_1 ^ ... ^ dx_{n-1} is positive.

The Hodge star is extended complex-linearly; complex conjugation is a
separate operation that negates modes and holonomy angles.  The L2 inner
product is hermitian, linear in the first slot:

    <a, b> = integral of a ^ star(conj(b))

with the coordinate cell [0,1)^n carrying total coordinate measure 1, so
the constant function has squared norm sqrt(det G).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AmbientMismatch, TruncationOverflow

#: default tolerance for identities that are exact up to rounding
EXACT_TOL = 1e-12


# ---------------------------------------------------------------------------
# multi-index bookkeeping
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def basis_indices(n):
    """All multi-indices on n axes, ordered by (degree, lexicographic)."""
    out = []
    for p in range(n + 1):
        out.extend(itertools.combinations(range(n), p))
    return tuple(out)


@lru_cache(maxsize=None)
def basis_position(n):
    return {I: i for i, I in enumerate(basis_indices(n))}


def wedge_sign(I, J):
    """Sign and result of dx_I ^ dx_J; sign 0 if the factors collide."""
    if set(I) & set(J):
        return 0, ()
    merged = list(I) + list(J)
    inv = 0
    for i in range(len(merged)):
        for j in range(i + 1, len(merged)):
            if merged[i] > merged[j]:
                inv += 1
    return (-1) ** inv, tuple(sorted(merged))


@lru_cache(maxsize=None)
def wedge_matrix(n, I):
    """Matrix of dx_I ^ (.) on the full 2^n basis."""
    basis = basis_indices(n)
    pos = basis_position(n)
    W = np.zeros((len(basis), len(basis)))
    for J in basis:
        s, K = wedge_sign(I, J)
        if s:
            W[pos[K], pos[J]] = s
    return W


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlatMetric:
    """Constant Riemannian metric G on R^n / Z^n."""

    matrix: tuple

    def __init__(self, matrix):
        G = np.asarray(matrix, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("metric must be a square matrix")
        if not np.allclose(G, G.T, atol=1e-12):
            raise ValueError("metric must be symmetric to 1e-12")
        if np.min(np.linalg.eigvalsh(G)) <= 0:
            raise ValueError("metric must be positive definite")
        object.__setattr__(self, "matrix", tuple(map(tuple, G)))

    @property
    def n(self):
        return len(self.matrix)

    @property
    def G(self):
        return np.asarray(self.matrix, dtype=float)

    @property
    def Ginv(self):
        return np.linalg.inv(self.G)

    @property
    def sqrt_det(self):
        return float(np.sqrt(np.linalg.det(self.G)))


def _minor_det(Ginv, I, J):
    if not I:
        return 1.0
    return float(np.linalg.det(Ginv[np.ix_(I, J)]))


@lru_cache(maxsize=None)
def star_matrix(metric: FlatMetric):
    """Full 2^n x 2^n matrix of the Hodge star in the dx_I basis.

    Defined by  dx_I ^ star(dx_J) = <dx_I, dx_J>_G * sqrt(det G) * dx_{0..n-1}
    with <dx_I, dx_J>_G the minor determinant of G^{-1} on rows I, columns J.
    """
    n = metric.n
    basis = basis_indices(n)
    pos = basis_position(n)
    Ginv = metric.Ginv
    sq = metric.sqrt_det
    S = np.zeros((len(basis), len(basis)))
    full = tuple(range(n))
    for J in basis:
        p = len(J)
        for I in basis:
            if len(I) != p:
                continue
            Ic = tuple(sorted(set(full) - set(I)))
            s, K = wedge_sign(I, Ic)
            assert K == full
            S[pos[Ic], pos[J]] += s * _minor_det(Ginv, I, J) * sq
    return S


@lru_cache(maxsize=None)
def gram_matrix(metric: FlatMetric):
    """Gram matrix of the coefficient basis: <dx_I, dx_J> per unit cell."""
    n = metric.n
    basis = basis_indices(n)
    Ginv = metric.Ginv
    sq = metric.sqrt_det
    M = np.zeros((len(basis), len(basis)))
    for i, I in enumerate(basis):
        for j, J in enumerate(basis):
            if len(I) == len(J):
                M[i, j] = _minor_det(Ginv, I, J) * sq
    return M


@lru_cache(maxsize=None)
def gram_factor(metric: FlatMetric):
    """Upper-triangular R with R^T R = Gram; maps coefficients to an
    orthonormal frame (v -> R v)."""
    return np.linalg.cholesky(gram_matrix(metric)).T.copy()


@lru_cache(maxsize=None)
def degree_array(n):
    return np.array([len(I) for I in basis_indices(n)])


# ---------------------------------------------------------------------------
# ambient
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ambient:
    """Descriptor shared by all forms in a computation: torus dimension,
    flat metric, bundle, and mode truncation radius (sup norm)."""

    metric: FlatMetric
    bundle: "FlatBundle"
    trunc: int

    @property
    def n(self):
        return self.metric.n

    def conjugate(self):
        return Ambient(self.metric, self.bundle.conjugate(), self.trunc)

    def compatible(self, other):
        return (
            self.metric == other.metric
            and self.bundle == other.bundle
        )


def _check_same(a: Ambient, b: Ambient):
    if not a.compatible(b):
        raise AmbientMismatch("forms live over different ambients")


# ---------------------------------------------------------------------------
# forms
# ---------------------------------------------------------------------------

class Form:
    """Sparse bundle-valued differential form.

    Coefficients are stored as a dict mapping (mode tuple, channel, multi
    index tuple) -> complex.  Instances are treated as immutable values;
    all operations return new forms.
    """

    __slots__ = ("ambient", "coeffs")

    def __init__(self, ambient: Ambient, coeffs=None):
        self.ambient = ambient
        self.coeffs = {}
        if coeffs:
            for key, c in coeffs.items():
                if c != 0:
                    self.coeffs[key] = complex(c)

    # -- constructors -----------------------------------------------------
    @classmethod
    def basis(cls, ambient, mode, index, channel=0, coeff=1.0):
        mode = tuple(int(m) for m in mode)
        if len(mode) != ambient.n:
            raise ValueError("mode length must equal torus dimension")
        if max((abs(m) for m in mode), default=0) > ambient.trunc:
            raise TruncationOverflow(f"mode {mode} outside radius {ambient.trunc}")
        index = tuple(sorted(int(i) for i in index))
        if any(i < 0 or i >= ambient.n for i in index):
            raise ValueError("multi-index axis out of range")
        return cls(ambient, {(mode, int(channel), index): coeff})

    @classmethod
    def zero(cls, ambient):
        return cls(ambient, {})

    # -- structure --------------------------------------------------------
    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.coeffs.values())

    def degrees(self):
        return sorted({len(I) for (_, _, I) in self.coeffs})

    def degree_component(self, p):
        return Form(
            self.ambient,
            {k: c for k, c in self.coeffs.items() if len(k[2]) == p},
        )

    def max_abs(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def prune(self, tol):
        return Form(
            self.ambient,
            {k: c for k, c in self.coeffs.items() if abs(c) > tol},
        )

    # -- linear ops -------------------------------------------------------
    def __add__(self, other):
        _check_same(self.ambient, other.ambient)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0.0) + c
        amb = self.ambient if self.ambient.trunc >= other.ambient.trunc else other.ambient
        return Form(amb, out)

    def __sub__(self, other):
        return self + (other * (-1.0))

    def __mul__(self, scalar):
        return Form(self.ambient, {k: c * scalar for k, c in self.coeffs.items()})

    __rmul__ = __mul__

    def conjugate(self):
        """Coefficient-wise conjugation; the result lives in the conjugate
        bundle (holonomy angles negated mod 1).

        The character -(k + theta) rebases to mode -k - 1 on axes where the
        channel angle is nonzero, so that the conjugate of every basis
        element is again a basis element of the conjugate ambient.
        """
        theta = self.ambient.bundle.theta
        out = {}
        for (k, a, I), c in self.coeffs.items():
            shift = (theta[a] != 0).astype(int)
            nk = tuple(-m - s for m, s in zip(k, shift))
            out[(nk, a, I)] = out.get((nk, a, I), 0.0) + np.conj(c)
        return Form(self.ambient.conjugate(), out)


def wedge(a: Form, b: Form, out_trunc=None) -> Form:
    """Wedge product.  At least one factor must be scalar valued (rank-1
    trivial channel); mode vectors add.  ``out_trunc`` declares the output
    truncation radius (default: the larger input radius)."""
    _check_wedge_channels(a, b)
    if out_trunc is None:
        out_trunc = max(a.ambient.trunc, b.ambient.trunc)
    scalar_first = a.ambient.bundle.is_trivial_line()
    amb = Ambient((a.ambient.metric), b.ambient.bundle if scalar_first else a.ambient.bundle, out_trunc)
    out = {}
    for (k1, a1, I), c1 in a.coeffs.items():
        for (k2, a2, J), c2 in b.coeffs.items():
            s, K = wedge_sign(I, J)
            if not s:
                continue
            mode = tuple(x + y for x, y in zip(k1, k2))
            if max((abs(m) for m in mode), default=0) > out_trunc:
                raise TruncationOverflow(
                    f"wedge produced mode {mode} outside radius {out_trunc}"
                )
            ch = a2 if scalar_first else a1
            key = (mode, ch, K)
            out[key] = out.get(key, 0.0) + s * c1 * c2
    return Form(amb, out)


def _check_wedge_channels(a, b):
    if a.ambient.metric != b.ambient.metric:
        raise AmbientMismatch("wedge factors carry different metrics")
    if not (a.ambient.bundle.is_trivial_line() or b.ambient.bundle.is_trivial_line()):
        raise AmbientMismatch(
            "wedge requires at least one scalar-valued factor; "
            "use hermitian_pairing for bundle-bundle products"
        )


def hodge_star(a: Form) -> Form:
    """Complex-linear Hodge star; preserves modes and channels."""
    n = a.ambient.n
    S = star_matrix(a.ambient.metric)
    basis = basis_indices(n)
    pos = basis_position(n)
    out = {}
    for (k, ch, I), c in a.coeffs.items():
        col = S[:, pos[I]]
        for row in np.nonzero(col)[0]:
            key = (k, ch, basis[row])
            out[key] = out.get(key, 0.0) + c * col[row]
    return Form(a.ambient, out)


def inner_product(a: Form, b: Form) -> complex:
    """Hermitian L2 inner product, linear in the first slot.

    Basis elements with distinct (mode, channel) are orthogonal, so the sum
    runs over matched keys only.
    """
    _check_same(a.ambient, b.ambient)
    Gm = gram_matrix(a.ambient.metric)
    pos = basis_position(a.ambient.n)
    # group by (mode, channel)
    total = 0.0 + 0.0j
    bkeys = {}
    for (k, ch, J), c in b.coeffs.items():
        bkeys.setdefault((k, ch), []).append((J, c))
    for (k, ch, I), c in a.coeffs.items():
        for J, c2 in bkeys.get((k, ch), ()):
            g = Gm[pos[I], pos[J]]
            if g:
                total += c * np.conj(c2) * g
    return complex(total)


def norm(a: Form) -> float:
    return float(np.sqrt(max(inner_product(a, a).real, 0.0)))


def integrate(a: Form) -> complex:
    """Integral over the torus of a scalar-valued form: picks the top-degree
    component of the zero mode (coordinate cell has measure 1)."""
    if not a.ambient.bundle.is_trivial_line():
        raise AmbientMismatch("integrate expects a scalar-valued form")
    n = a.ambient.n
    top = tuple(range(n))
    zero = (0,) * n
    return complex(a.coeffs.get((zero, 0, top), 0.0))


def hermitian_pairing(a: Form, b: Form, out_trunc=None) -> complex:
    """The sesquilinear intersection pairing  integral of a ^ conj(b).

    Both arguments live in the same bundle; the channel contraction is
    diagonal in the holonomy frame, so the combined character of matched
    channels is an integer mode and the integral is exact.
    """
    _check_same(a.ambient, b.ambient)
    if out_trunc is None:
        out_trunc = a.ambient.trunc + b.ambient.trunc
    n = a.ambient.n
    top = tuple(range(n))
    total = 0.0 + 0.0j
    bconj = {}
    for (k, ch, J), c in b.coeffs.items():
        bconj.setdefault(ch, []).append((k, J, np.conj(c)))
    for (k1, ch, I), c1 in a.coeffs.items():
        for (k2, J, c2) in bconj.get(ch, ()):
            s, K = wedge_sign(I, J)
            if not s or K != top:
                continue
            mode = tuple(x - y for x, y in zip(k1, k2))
            if any(mode):
                continue
            total += s * c1 * c2
    return complex(total)


def random_form(ambient, rng, degree=None, channels=None, n_terms=6, mode_radius=None):
    """Random band-limited form for property tests."""
    n = ambient.n
    if mode_radius is None:
        mode_radius = min(1, ambient.trunc)
    basis = [I for I in basis_indices(n) if degree is None or len(I) == degree]
    if channels is None:
        channels = range(ambient.bundle.rank)
    channels = list(channels)
    coeffs = {}
    for _ in range(n_terms):
        I = basis[rng.integers(len(basis))]
        k = tuple(int(v) for v in rng.integers(-mode_radius, mode_radius + 1, size=n))
        ch = channels[rng.integers(len(channels))]
        c = complex(rng.normal(), rng.normal())
        coeffs[(k, ch, I)] = coeffs.get((k, ch, I), 0.0) + c
    return Form(ambient, coeffs)
