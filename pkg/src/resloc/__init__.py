"""Residential location choice with activity-based accessibility.

Hedonic land prices, sampled-alternative MNL estimation, Monte-Carlo
relocation under automated-vehicle scenarios and policy evaluation.
"""

__version__ = "0.1.0"
