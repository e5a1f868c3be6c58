"""Competitive gradient descent and comparison rules for two-player games."""

from .core import GameOracle, HyperParams, JointState, joint_norm, validate_oracle
from .games import bilinear_oracle, covariance_oracle, make_game, quadratic_oracle
from .harness import RunConfig, Trajectory, convergence_verdict, run, sweep
from .linalg import LinearOperator, cg_solve, operator_from_game
from .rules import (RuleSpec, StepReport, step_cgd, step_conopt, step_gda, step_lcgd,
                    step_neumann, step_ogda, step_sga)

__version__ = "0.1.0"
