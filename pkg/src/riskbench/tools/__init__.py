"""Utility scripts for riskbench."""
