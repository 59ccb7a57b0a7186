"""Topology learning for power grids with zero-injection buses."""

from .covariance import (CovarianceMatrix, IllConditionedCovariance, analytic_lc_covariance,
                         analytic_theta_covariance, empirical_covariance, inverse_covariance,
                         snr_params, woodbury_deviation)
from .fixtures import fixture_grids, get_fixture
from .grid import (Edge, Grid, GridError, LaplacianMatrix, Node, TopologyEstimate, build_laplacian,
                   kron_reduce, load_grid, save_grid, topology_error, validate_assumptions)
from .harness import (ErrorCurve, ExperimentSpec, emit_results, ingest_load_csv, load_spec,
                      parse_spec, run_experiment, tune_thresholds)
from .learner import (LearnError, LearnerConfig, LearnOutcome, StageCache, detect_uc_edges,
                      estimate_u_neighbors, identify_zero_injection, joint_identify, learn_from_covariance,
                      learn_topology, merge_overlapping_nodes, theoretical_thresholds)
from .powerflow import InjectionModel, PowerFlowError, ac_pf, dc_pf, lc_pf, sample_injections, simulate
from .regression import (QuadraticObjective, RegressionSolution, qp_solve, solve_complex_regression,
                         solve_constrained_nodal_regression, solve_nodal_regression)
from .samples import NoiseModel, SampleSet, add_noise, detrend, read_samples_csv, write_samples_csv

__version__ = "0.1.0"
