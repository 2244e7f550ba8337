"""Batch figure rendering for mtlqg experiment CSVs.

Three scripts, one per panel: per-task optimality gaps over iterations,
train/test generalization bands, and estimator RMSE against the number of
tasks with a fitted log-log slope.  Plotting never mutates inputs; identical
CSVs produce identical figures.
"""

from .csvio import SchemaError, read_columns

__all__ = ["SchemaError", "read_columns"]
