"""Personalized path recourse for deterministic sequential environments.

Given an observed path through an environment, find an alternative path that
reaches a better outcome, stays close to the original and matches how a
particular agent tends to act.  The alternative is learned with a Q-network
trained on a composite reward (goal + path similarity + policy agreement).
"""

__version__ = "0.1.0"

from .baselines import BL1Config, SearchBudgetExceeded, bl1_search, exhaustive_optimal, hamming
from .evaluation import (ScoreTriple, SweepGrid, policy_kl, ppr_recourse, score_policy,
                         score_triple, sensitivity_sweep, visited_states)
from .exploration import EpsilonSchedule, VisitCounts, select_action, ucb_score
from .gridworld import (EXPERIENCED, NEW, PROFILES, DriverProfile, Grid, GridWorld,
                        generate_bad_paths, simulate_driver_policy)
from .mdp import (Environment, IllegalActionError, Path, PolicyFunction, TabularMDP, chain_mdp,
                  rollout, validate_path)
from .personalization import LinkConfig, link_h, policy_path_reward
from .qlearn import (DQNConfig, Experience, QNetwork, ReplayBuffer, TargetNetwork, TrainConfig,
                     TrainingDivergedError, TrainingLog, adam_step, greedy_rollout, td_loss,
                     train_dqn, train_ppr)
from .reward import EnvironmentReturn, RewardBreakdown, RewardWeights, total_reward
from .similarity import EditWeights, edit_distance, path_similarity
