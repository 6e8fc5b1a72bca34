"""
Borel-Cantelli criteria for Markov sequences of events
Exact series/window computations plus Monte Carlo for the F^alpha-scheme
and for concomitants of maxima
"""

__version__ = "0.3.0"
