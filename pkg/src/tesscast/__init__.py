"""Spatio-temporal taxi-demand forecasting over dual city tessellations.

The pipeline partitions city space twice (fixed geohash grid and K-Means
seeded Voronoi cells), fits seasonal forecasters per partition, and picks
the better tessellation at every time step with a discounted
multiplicative-weights combiner.
"""

__version__ = "0.1.0"
