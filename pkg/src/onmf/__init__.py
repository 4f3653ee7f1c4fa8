"""Streaming NMF for Markov-dependent data and network dictionary learning."""

__version__ = "0.1.0"

from .factorization import (AggregateStats, ConstraintPiece, ConstraintSpec,
                            Dictionary, OnlineNMF, StepResult, WeightSchedule,
                            ZeroDictionaryError, coding_objective,
                            dictionary_update, ellipsoid_gap, empirical_loss,
                            empirical_weights, growth_check, init_dictionary,
                            kkt_residual, load_aggregates, load_dictionary,
                            save_aggregates, save_dictionary, sparse_code,
                            surrogate_loss, update_aggregates)
from .ndl import (CorruptionError, CorruptionResult, DegenerateAggregatesError,
                  NDLParams, NetworkDictionary, ReconstructionState, RocError,
                  RocResult, candidate_pairs, corrupt_network, denoise_classify,
                  dominance_scores, ndl_learn, nr_reconstruct, roc_auc)
from .networks import (EdgeListError, Motif, Network, OracleSizeError,
                       SamplingError, chain_update, chain_walk_sample,
                       glauber_conditional, glauber_update,
                       hom_distribution_bruteforce, hom_weight,
                       initial_homomorphism, mesoscale_patch, pivot_acceptance,
                       pivot_update, rejection_sample_hom, tv_distance)
from .pgm import (PgmError, read_pgm, read_spins_pgm, write_pgm,
                  write_spins_pgm)
from .sources import (IsingConfig, PatchWalker, conditional_plus_probability,
                      image_patch_minibatch, ising_gibbs_run, ising_gibbs_step,
                      levels_to_spins, reconstruct_grid, spin_patch_minibatch,
                      spins_to_levels)
