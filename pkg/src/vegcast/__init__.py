"""vegcast: over-produce/select/combine model ensembles for one-month-ahead
prediction of vegetation condition (VCI3M) from lagged drought indicators."""

__version__ = "0.1.0"
