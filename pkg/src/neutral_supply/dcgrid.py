"""Three-node DC microgrid: two boost-converter loads around a central bus.

System 1 and system 3 are current-controlled loads, system 2 is the bus
with its capacitor voltage and inductor current.  The graph is the line
1 - 2 - 3 with scalar signals in both directions on each link.
"""

import numpy as np

from .model import LtiSystem, NetworkGraph

__all__ = ["DEFAULT_PARAMS", "dcgrid_systems", "dcgrid_network", "REFERENCE_STORAGE",
           "REFERENCE_SUPPLIES"]

DEFAULT_PARAMS = {
    "R": 1.0,
    "L": 1e-3,
    "K": 10.0,
    "RL1": 20.0,
    "RL3": 20.0,
    "d": (0.3953, 0.1634, 0.7785),
}

# published storage blocks (four decimals)
REFERENCE_STORAGE = {
    1: np.array([[3.3282]]),
    2: np.array([[14.3127, 0.0261], [0.0261, 0.0069]]),
    3: np.array([[2.3523]]),
}

# published supplies as full 2x2 matrices [[Q, S], [S, R]], keyed (i, j) for s_ij(v_ij, w_ij)
REFERENCE_SUPPLIES = {
    (1, 2): np.array([[4754.6, 1543.5], [1543.5, -1637.6]]),
    (2, 1): np.array([[1637.6, -1543.5], [-1543.5, -4754.6]]),
    (2, 3): np.array([[608.0, -506.8], [-506.8, -2298.6]]),
    (3, 2): np.array([[2298.6, 506.8], [506.8, -608.0]]),
}


def dcgrid_systems(params=None):
    """State-space blocks of the three nodes, keyed by system id."""
    p = dict(DEFAULT_PARAMS, **(params or {}))
    R, L, K = p["R"], p["L"], p["K"]
    d1, d2, d3 = p["d"]
    g1 = LtiSystem(
        [[-(R + p["RL1"] / d1**2) / L]],
        {2: {"B": [[1.0 / (d1 * d2 * L)]], "C": [[p["RL1"]]]}},
    )
    g3 = LtiSystem(
        [[-(R + 2.0 * p["RL3"] / d3**2) / L]],
        {2: {"B": [[1.0 / (d2 * d3 * L)]], "C": [[p["RL3"]]]}},
    )
    A2 = [[0.0, 1.0], [-2.0 / (d2**2 * K * L), -R / L]]
    g2 = LtiSystem(A2, {
        1: {"B": [[0.0], [1.0 / (d1 * d2 * L)]], "C": [[1.0 / K, 0.0]]},
        3: {"B": [[0.0], [1.0 / (d2 * d3 * L)]], "C": [[1.0 / K, 0.0]]},
    })
    return {1: g1, 2: g2, 3: g3}


def dcgrid_network(params=None):
    """The line network 1 - 2 - 3 with scalar links in both directions."""
    edges = [(1, 2, 1), (2, 1, 1), (2, 3, 1), (3, 2, 1)]
    return NetworkGraph(dcgrid_systems(params), edges)
