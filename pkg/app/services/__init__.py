"""
Services package for the pump scheduler.
"""
