"""
Configuration, logging, result files, statistics and timing helpers
"""
