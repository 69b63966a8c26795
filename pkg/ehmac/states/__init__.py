"""
Domain types, dynamics and datasets of the multiple-access system.
"""
