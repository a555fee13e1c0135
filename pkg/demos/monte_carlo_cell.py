"""A small Monte Carlo comparison of the five mean estimators.

Design C1 draws the outcome from a linear model and the response from a
logistic model in two of the signal covariates, so units with large
outcomes respond more often and the complete-case mean is biased upward.
Pass a replicate count on the command line (default 20).
"""
import sys

from sparse_aipw import ExperimentPlan, run_experiment

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 20
plan = ExperimentPlan.grid(["C1"], ["I"], replicates=reps, base_seed=7)
table = run_experiment(plan)
print(table.to_markdown())
print("PS renders '-' when the full-covariate MLE fails, which it does here (p = 400).")
