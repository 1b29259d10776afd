"""
Flapwing core: CPG-driven flapping flight simulation.
"""

__version__ = "0.4.0"
