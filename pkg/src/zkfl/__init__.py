"""Verifiable, differentially private federated linear regression with
constraint-system proofs checked by a simulated ledger."""

__version__ = "0.1.0"
