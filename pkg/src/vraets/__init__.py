"""Unsupervised anomaly detection for multivariate time series.

The pipeline: learn low-dimensional sequence representations with a
variational recurrent autoencoder, project them to 2D, cluster the
projections, and score normal-vs-abnormal classification against
ground truth labels.
"""

from vraets.errors import DataError, NumericalError, PipelineError

__all__ = ["DataError", "NumericalError", "PipelineError"]
__version__ = "0.1.0"
