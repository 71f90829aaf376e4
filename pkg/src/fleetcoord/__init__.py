"""Online coordination of heterogeneous robot fleets under temporal-logic missions."""

__version__ = "0.1.0"
