import numpy as np
import pytest

from epilock import NetworkData, build_flow_matrix
from epilock.spectral import strongly_connected


def random_strongly_connected(n, rng, density=0.6, scale=1.0):
    """Nonnegative matrix with a strongly connected pattern: a directed
    ring guarantees connectivity, extra entries add bulk."""
    M = (rng.random((n, n)) < density) * rng.random((n, n)) * scale
    for i in range(n):
        M[i, (i + 1) % n] = max(M[i, (i + 1) % n], 0.1 + rng.random() * scale)
    assert strongly_connected(M != 0)
    return M


def random_network(n, rng, home_stay_range=(0.5, 0.8), pop_range=(1e3, 1e5),
                   density=0.7):
    """NetworkData with a strongly connected travel matrix and positive
    diagonal, plus a random initial susceptible vector."""
    trips = (rng.random((n, n)) < density) * rng.uniform(10, 1000, (n, n))
    for i in range(n):
        trips[i, i] = rng.uniform(2000, 9000)
        trips[i, (i + 1) % n] = max(trips[i, (i + 1) % n], 10.0)
    home_stay = rng.uniform(*home_stay_range, size=n)
    home_dwell = home_stay * 1440.0
    tau = (1.0 - home_stay)[:, None] * trips / trips.sum(axis=1)[:, None]
    N = rng.uniform(*pop_range, size=n)
    e = N * rng.uniform(0.3, 0.6, size=n)
    net = NetworkData.from_raw(tau, N, e, home_dwell)
    s0 = rng.uniform(0.7, 0.98, size=n)
    return net, s0


@pytest.fixture
def rng():
    return np.random.default_rng(20240117)
