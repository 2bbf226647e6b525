"""Budget-dependent option-set search on the food-source grid-world."""

__version__ = "0.1.0"
