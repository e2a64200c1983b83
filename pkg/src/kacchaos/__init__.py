"""Event-driven simulation of Kac-type particle systems and their mean-field limit."""
from .coupling import g_coupling, run_coupled, run_decoupled, sup_distance_statistic
from .events import EventAtom, EventLog, EventStream, fork_independent_copy, next_event, restrict
from .harness import ExperimentConfig, ReportRow, run_experiment, summarize
from .laws import (ExponentProfile, InitialLaw, InteractionLaw, c_of_q, check_theorem_hypotheses,
                   exponent_profile, q_star, sample_alpha)
from .metrics import (RateFitResult, eps_n_p, fit_power_law, block_split_check, moment_q, w_p_quantile,
                      w_p_sorted, wpp_vs)
from .particles import ParticleEnsemble, apply_collision, run_bird, run_nanbu
from .reference import (PoolProvider, ReferencePool, build_pool, is_analytically_stationary,
                        pool_quantile, wild_sample, wild_samples)

__version__ = "0.1.0"
