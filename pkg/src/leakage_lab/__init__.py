"""Privacy-leakage experiments: Bayesian membership attacks, attack bounds and neural baselines."""

__version__ = "0.1.0"
