"""Twisted Hodge theory, signature forms, and spectral invariants on flat tori."""

from . import blockops, bundle, complexes, cylinder, exterior, heat, signature, spectral
from .bundle import FlatBundle, flat_differential, trivial_bundle
from .complexes import (
    CohomologyResult,
    FluxForm,
    build_twisted_differential,
    gauge_transform,
    kunneth_check,
    poincare_pairing,
    rescale_flux,
    scaling_conjugation_check,
    twisted_cohomology,
    twisted_laplacian,
)
from .exterior import (
    Ambient,
    FlatMetric,
    Form,
    hodge_star,
    inner_product,
    wedge,
)

__version__ = "0.1.0"
