"""Dyadic cubes, Haar wavelets, paraproducts and function-space norms on finite
metric measure spaces."""

from .dyadic import DyadicSystem, build_cubes, build_nets, build_system, verify_cubes
from .fnorms import (
    atomic_norm_upper,
    bmo_norm,
    bmo_plus,
    carleson_norm,
    grand_maximal,
    h1_wavelet_norms,
    llog_norm,
    lp_norm,
    make_atom,
)
from .mra import SplineBasis, build_splines, gram, project_P, project_Q, telescope_check
from .paraproduct import build_Uki, kernel_Kki, paraproduct_series, paraproducts
from .space import MetricMeasureSpace, fixture, inner, load_space, measure_distance, parse_fixture, validate_space
from .wavelet import CoeffSeq, WaveletBasis, analyze, build_wavelets, synthesize, wavelet_checks

__version__ = "0.1.0"
