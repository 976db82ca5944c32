"""
Soliton-train computing simulator
Numbers encoded as interaction/phase steps in 1D multi-component condensates
"""

__version__ = "0.3.0"
