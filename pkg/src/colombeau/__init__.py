"""Numerical nets of smooth functions: growth classification, generalized
flows, and invariance tests under translations, rotations and flows."""

from .asymptotics import (AsymptoticClass, GrowthProfile, Thresholds, classify,
                          growth_profile, is_negligible, log_type_check, norm_profile)
from .embeddings import MollifierSpec, embed_delta, gallery, make_mollifier, shrinking_bump
from .errors import (BlowUpError, CapabilityError, ColombeauError, ConfigurationError,
                     ConstructionInsufficientError, ExpressionError, GridLookupError,
                     InsufficientDataError, InvariantViolation, PreconditionError, ScenarioError)
from .flow_engine import (check_completeness, flow, generalized_rotation, linear_flow, solve_ivp,
                          verify_group_law)
from .invariance import (build_invariant_representative, flow_invariance_test,
                         generalized_rotation_test, infinitesimal_test, lie_derivative,
                         planar_slice, polar_reduce_2d, standard_rotation_test, translation_tests)
from .invariant_reduction import radial_profile, verify_reduction
from .net_core import (CompactBox, EpsilonGrid, GeneralizedNumber, GeneralizedPoint, NetFunction,
                       NetVectorField, default_grid, make_epsilon_grid)
from .parse import parse_expression
from .scenario import parse_scenario, run

__version__ = "0.1.0"
