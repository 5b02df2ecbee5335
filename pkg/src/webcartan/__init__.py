"""Differential invariants of autonomous ODE systems under web transformations."""
