"""Finite-time frequency-domain, norm-optimal and basis-function ILC."""

__version__ = "0.1.0"
