"""Sampled quasi-Newton methods (S-LBFGS, S-LSR1) with classical and
first-order baselines, a benchmark harness and spectrum diagnostics."""
from .bfgs import (LbfgsMemory, bfgs_update_dense, classical_bfgs_run, classical_lbfgs_run,
                   slbfgs_run, two_loop)
from .data import build_network, gen_toy_dataset, load_csv_dataset
from .diagnostics import spectrum_match, spectrum_run
from .firstorder import AdamHyper, adam_run, gd_run
from .harness import RunConfig, compare_report, run_experiment
from .kernels import det, lu_factor, solve_dense, sym_eig
from .linesearch import LineSearchParams, armijo_backtrack
from .objective import (CountingObjective, Dataset, MlpObjective, MlpSpec, QuadraticObjective,
                        init_params, quadratic_objective)
from .sampler import CurvaturePairs, sample_pairs
from .sr1 import (Sr1Compact, build_compact, classical_lsr1_run, classical_sr1_run, slsr1_run,
                  sr1_update_dense)
from .trace import Budget, Trace, TraceRow
from .trustregion import TrustRegionParams, adjust_tr, newton_tr_run, steihaug_cg

__version__ = "0.1.0"
