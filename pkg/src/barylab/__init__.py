"""Contractive barycentric maps on metric spaces: barycenters, transport, conditional
expectations, martingale and ergodic limits, the semiflow on maps, and exact
large-deviation quantities at desk scale."""

from .barycenters import (
    Arithmetic,
    BarycentricMap,
    CanonicalNPC,
    EsSahibHeinich,
    GeodesicCombination,
    Karcher,
    SemiflowImage,
    canonical_npc,
    contractivity_audit,
    es_sahib_heinich,
    evaluate,
    geodesic_combination,
    karcher_mean,
    karcher_residual,
    map_distance_lower_bound,
    map_from_dict,
    monotonicity_audit,
    semiflow_audit,
    semiflow_fixed_point,
)
from .condexp import (
    associativity_probe,
    beta_conditional_expectation,
    beta_expectation,
    beta_expectation_restricted,
    disintegrate,
    separation_test,
    sturm_conditional_expectation,
)
from .ergodic import (
    Transformation,
    conditional_continuity_report,
    ergodic_convergence_report,
    ergodic_limit,
    gamma_continuity_report,
    gamma_contractivity_audit,
    gamma_monotonicity_audit,
    trajectory_empirical_measure,
)
from .errors import BarylabError, CapacityError, ConvergenceError, DomainError, InputError, UnsupportedError
from .geometry import Geometry, Space, convexity_constant, dist, geodesic, loewner_leq, matrix_function
from .ldp import (
    IIDModel,
    enumerate_empirical_distribution,
    event_probability,
    general_position_probe,
    iid_slln_trial,
    ldp_gap_report,
    monte_carlo_event_probability,
    rate_function,
    rate_inf_over_event,
    relative_entropy,
)
from .martingales import (
    Filtration,
    dyadic_filtration,
    filtered_conditional_expectation,
    filtered_martingale_limit_check,
    is_filtered_martingale,
    martingale_convergence_report,
    regular_martingale,
)
from .measures import DiscreteMeasure, TransportPlan, pushforward, same_support_bound, wasserstein
from .probability import FiniteProbabilitySpace, PartitionAlgebra, RandomVariable

__version__ = "0.1.0"
