"""Bayesian inference toolkit: conjugate Dirichlet-Multinomial analysis, Poisson
regression by Metropolis and Hamiltonian Monte Carlo, Gibbs samplers for grouped
linear regression, chain diagnostics and model evaluation."""

__version__ = "0.1.0"
