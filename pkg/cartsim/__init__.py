"""
cartsim: contraction-based robust safety filters for multi-agent control, with baselines,
a stochastic closed-loop simulator and experiment suites.
"""

__version__ = "0.1.0"
