"""Few-shot environment adaptation for deep-learning receivers and beam predictors."""

from .errors import (ConfigurationError, DivergenceError, NumericError, StepOverflowError,
                     UsageError)

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DivergenceError", "NumericError", "StepOverflowError",
           "UsageError", "__version__"]
