"""Factor-augmented error-correction forecasting toolkit."""

__version__ = "0.1.0"
