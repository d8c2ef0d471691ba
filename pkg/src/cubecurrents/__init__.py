"""Branched cube complexes, their cubical currents and finite-level verification."""

from .branched import (
    InverseSystem,
    PlanePair,
    branched_cover,
    build_system,
    classify_plane_cells,
    ring_double_cover,
    subdivision_system,
    verify_wais,
)
from .complex import (
    Cell,
    CellMap,
    CubeComplex,
    Face,
    check_gallery_connected,
    check_measures,
    fiber_gallery_bound,
    link_bound,
    new_unit_cube,
    subdivide,
)
from .currents import (
    CubicalChain,
    MultilinearForm,
    boundary,
    check_flux,
    check_ipoinc,
    conservation_report,
    evaluate_on_form,
    fundamental_chain,
    mass,
    pushforward,
)
from .errors import AxiomViolation, CertificateError, ComplexError, GalleryOverflowError
from .flatnorm import GridChain, GridComplex, cubical_approximation, flat_norm, rasterize
from .galleries import (
    GalleryMeasure,
    check_pushforward_measure,
    gallery_measure,
    maximal_galleries,
    positive_boundary,
    refine_gallery_measure,
    verify_decomposition,
)
from .metric import FiniteMetricSpace, distortion, sample_metric, tap_check
from .nagata import NagataCover, nagata_cover_grid, poly_approx
from .report import CheckResult, Report

__all__ = [name for name in dir() if not name.startswith("_")]
