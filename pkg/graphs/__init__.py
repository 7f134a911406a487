"""
Space-time grid, measures, the SPDE models and the rate and covariance functionals
"""
