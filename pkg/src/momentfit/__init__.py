"""Multivariate polynomial regression with analytically propagated uncertainties."""

from .basis import AffineMap, BasisSpec, basis_size, monomial_exponents
from .errors import (
    ConditioningError,
    DegenerateWeightsError,
    InputError,
    InsufficientDataError,
    MomentfitError,
    NoSplitError,
)
from .modelselect import DegreeReport, SelectConfig, expected_loss, loss_difference, select_degree
from .moments import MomentAccumulator, ParameterVector, WeightedSample, accumulate, parameter_vector
from .partition import RegionTree, SplitRule, grow_tree, predict_tree, principal_axis
from .polyfit import GramSystem, PolynomialModel, build_gram, coefficient_derivatives, fit, predict, solve_amplitudes

__version__ = "0.1.0"
