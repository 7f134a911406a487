"""
Rate functionals and the Gaussian limit covariance
"""
