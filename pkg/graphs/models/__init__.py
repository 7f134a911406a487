"""
Heat semigroup, coefficient models, stepping engines and the controlled map
"""
