"""
Utilities package for the pump scheduler.
"""
