"""
skillprobe tests module
"""
