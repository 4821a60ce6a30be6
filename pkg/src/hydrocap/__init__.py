"""Co-optimized capacity investment and infinite-horizon hydro-thermal scheduling.

The package trains operating policies with stochastic dual dynamic programming
on cyclic policy graphs, optionally rooted at a one-shot investment node, and
ships the supporting pieces: a small LP layer, the weekly hydro-thermal stage
builder, the wind load-block linearizer, investment cost algebra, simulation
reporting, and a batch CLI.
"""

__version__ = "0.1.0"
