"""Set-membership search and tracking of ground targets by camera-equipped UAVs.

A simulation engine built around guaranteed set estimates: a synthetic
bounded-error vision oracle, per-UAV set-membership estimators with
communication fusion, and a receding-horizon planner minimizing estimation
uncertainty.
"""

__version__ = "0.1.0"
