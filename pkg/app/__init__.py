"""Aerodynamic Analysis API Package."""
