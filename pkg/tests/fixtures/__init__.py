"""
Test fixtures
"""
