"""Noise sweep, training data, exhaustive baselines and the Monte Carlo harness."""
