"""Bus fleet greenhouse-gas estimation from low-resolution GPS records.

The pipeline pairs sequential GPS fixes per vehicle, corrects straight-line
distances with a fleet-wide sinuosity factor estimated from a random sample
via shortest-path reconstruction, maps corrected distance and mean speed to
diesel use and CO2e, fills transmission gaps statistically, and aggregates
the result spatially and temporally.
"""

__version__ = "0.1.0"
