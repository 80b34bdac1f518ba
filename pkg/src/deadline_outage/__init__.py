"""Outage analysis and Monte Carlo simulation of cyclic multi-AP downlinks
with hard per-cycle deadlines."""

__version__ = "0.1.0"
