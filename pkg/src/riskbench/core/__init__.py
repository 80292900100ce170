"""Core logic for riskbench."""
