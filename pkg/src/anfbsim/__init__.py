"""Seeded simulator for neuro-fuzzy fraud screening over a proof-of-authority ledger."""
__version__ = "0.1.0"
