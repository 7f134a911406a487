"""
Inputs of a run: mark partitions with their white noise, and initial distribution functions
"""
