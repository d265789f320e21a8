"""Lookahead transfer gains, exact task grouping and collection-cost models."""

from .cost import CostBreakdown, CostProfile, audit_against_counters, lookahead_expectation, total_cost
from .errors import DomainError, NumericalError, SizeGuardError, StructuralError, TaskGroupError
from .evaluation import EvaluationReport, evaluate_grouping
from .feasibility import check_assignment, check_problem_assignment
from .gains import (
    GainMatrix,
    PairAccumulator,
    StepGainRecord,
    accumulate,
    finalize,
    group_gain_to_task,
    group_to_group_gain,
    read_gain_csv,
    read_record_log,
    write_gain_csv,
    write_record_log,
)
from .mip import MipModel, build_mip, export_mip
from .sim import (
    CollectionPolicy,
    LearningRate,
    LinearRegressionTask,
    LookaheadCostCounter,
    QuadraticTask,
    TrainState,
    check_observation1,
    collect_run,
    init_state,
    lookahead_gain,
    measure_step,
    train,
    verify_prop1_bound,
)
from .solver import GroupAssignment, GroupingProblem, objective, solve, solve_bruteforce

__version__ = "0.1.0"
