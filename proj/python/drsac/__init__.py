"""Distributionally robust soft actor-critic toolkit (C++ core)."""

from ._drsac import (
    ConfigError,
    DualSolution,
    IoError,
    NumericalError,
    TabularRmdp,
    dr_soft_bellman,
    dr_soft_policy_evaluation,
    dr_soft_policy_iteration,
    dual_objective,
    evaluate,
    gen_dataset,
    kl_divergence,
    nonrobust_soft_bellman,
    property_names,
    random_rmdp,
    solve_dual,
    solve_primal_bruteforce,
    train,
    validate_report,
    verify,
    worst_case_distribution,
)

__all__ = [name for name in dir() if not name.startswith("_")]
