"""Deep-space optical navigation image processing.

From a synthetic sky-field image to an identified planet line of sight:
star identification by k-vector range search, SVD attitude
determination hardened by RANSAC, analytic covariance propagation of
the expected beacon projection, and chi-square gated spike selection,
plus the Monte Carlo harness that measures the whole chain.
"""

__version__ = "0.1.0"
