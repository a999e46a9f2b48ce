"""Coherent probabilistic forecasting for hierarchical time series."""

from .hierarchy import (HierarchySpec, StructureError, SummingMatrix, aggregate_bottom,
                        build_summing_matrix, coherency_residual, fig1_hierarchy)

__version__ = "0.1.0"
