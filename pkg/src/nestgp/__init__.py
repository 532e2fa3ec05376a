"""Two-layer Gaussian-process regression with iteration-indexed kernel
hyperparameters, its non-stationary equivalent and the blended model."""

__version__ = "0.1.0"
