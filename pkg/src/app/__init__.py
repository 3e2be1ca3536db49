"""
skillprobe Command-Line Module
"""
