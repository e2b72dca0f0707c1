"""Bulk-surface reaction-diffusion-sorption models and their fast-process limits."""
__version__ = "0.1.0"
