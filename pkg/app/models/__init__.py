"""
Models package for the pump scheduler: network, schedules, surrogates and MILP data.
"""
