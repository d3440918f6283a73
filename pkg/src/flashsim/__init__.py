"""Agent-based simulator of flash-crash contagion through leveraged
fund-asset networks, with limit-order-book market microstructure."""

__version__ = "0.1.0"
