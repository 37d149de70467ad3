"""Assortment optimization and learning under a continuous multinomial logit model."""

from .bench import (LOG, TWO_THIRDS, ExperimentConfig, RegretSummary, config_hash, fit_rate,
                    replication_rng, run_experiment, sign_changes, worst_case_regret)
from .errors import (BadIndexSetError, BadScaleError, CapacityNotBindingError, ConfigError,
                     ContinAssortError, DegenerateFitError, EmptyExplorationError,
                     HorizonTooShortError, MismatchedHorizonsError, NonFiniteError)
from .instances import (LowerBoundInstance, build_instance, make_baseline_instance,
                        make_bimodal_instance, make_lower_bound_instance)
from .kde import (EstimatedPreference, ExplorationLog, KernelSpec, TestPlan, bandwidth_and_order,
                  combine_vhat, estimate_piece, estimate_preference, kernel_eval, legendre_phi,
                  legendre_phis, shift_coefficients)
from .model import (Assortment, Instance, NoPurchase, PreferenceFunction, Product, ProfitCurve,
                    expected_revenue, integrate, l1_distance, no_purchase_prob, purchase_prob_in,
                    sample_purchase, sample_purchases)
from .policies import (BanditConfig, DiscreteBins, EpochState, KdepConfig, RegretTrace, SalesLog,
                       SapConfig, discrete_static_opt, discretize, run_discrete_bandit, run_kdep,
                       run_sap, sap_batch, sap_step)
from .solver import (LevelSetResult, SolveResult, SolverConfig, best_single_interval,
                     capacitated_inner_max, inner_bisection_level, inner_max_curve, inner_value,
                     solve, solve_capacitated, solve_uncapacitated, upper_level_set)

__version__ = "0.1.0"
