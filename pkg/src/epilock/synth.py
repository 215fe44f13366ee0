"""Synthetic network generators and the perturbation machinery for the
robustness and parameter studies."""

import math
from dataclasses import dataclass

import numpy as np

from . import spectral
from .balancing import solve
from .errors import CalibrationRange, EpilockError, RowCollapse
from .model import (COVID, MINUTES_PER_DAY, DiseaseParams, NetworkData,
                    TravelMatrix, build_flow_matrix)
from .spectral import calibrate_beta, perron

# three-node example: a large city A and two suburbs B, C with no direct
# travel between the suburbs
THREE_NODE_TRIPS = np.array([[8000.0, 1000.0, 2000.0],
                       [2000.0, 8500.0, 0.0],
                       [1500.0, 0.0, 8000.0]])
THREE_NODE_HOME_DWELL = np.array([800.0, 800.0, 800.0])
THREE_NODE_POPULATIONS = np.array([200000.0, 2000.0, 4000.0])
THREE_NODE_S0 = np.array([0.90, 0.92, 0.95])
THREE_NODE_XA = np.array([0.0825, 0.0660, 0.0412])
THREE_NODE_XS = np.array([0.0134, 0.0107, 0.0067])
THREE_NODE_R = np.array([0.0041, 0.0033, 0.0021])

CITY_SUBURB_TRIPS = np.array([[8000.0, 200.0], [20.0, 850.0]])
CITY_SUBURB_HOME_DWELL = np.array([800.0, 800.0])
CITY_SUBURB_CASES = {
    1: (np.array([20000.0, 2000.0]), np.array([0.70, 0.95])),
    2: (np.array([200000.0, 2000.0]), np.array([0.70, 0.95])),
    3: (np.array([200000.0, 2000.0]), np.array([0.95, 0.95])),
}


@dataclass(frozen=True)
class SynthConfig:
    graph_kind: str = "geometric"
    n: int = 50
    seed: int = 0
    population: float = 4000.0
    home_stay: float = 0.8
    s0_range: tuple = (0.8, 0.9)
    mean_degree: float = 8.0
    ba_links: int = 3
    edge_probs: tuple = ()
    hotspot_count: int = 0
    hotspot_prob: float = 0.9
    city_suburb_case: int = 1

    KINDS = ("geometric", "barabasi_albert", "custom_prob", "city_suburb",
             "three_node_example")

    def __post_init__(self):
        if self.graph_kind not in self.KINDS:
            raise ValueError(f"unknown graph kind {self.graph_kind!r}")


def _geometric_adjacency(n, mean_degree, rng):
    pts = rng.random((n, 2))
    # expected degree ~ n * pi r^2 in the unit square (edge effects aside)
    r = math.sqrt(mean_degree / (math.pi * n))
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    adj = (d2 <= r * r).astype(float)
    np.fill_diagonal(adj, 0.0)
    return adj, pts


def _ba_adjacency(n, m, rng):
    adj = np.zeros((n, n))
    targets = list(range(m))
    repeated = list(range(m))
    for v in range(m, n):
        chosen = set()
        while len(chosen) < m:
            chosen.add(int(rng.choice(repeated)) if repeated else int(rng.integers(v)))
        for w in chosen:
            adj[v, w] = adj[w, v] = 1.0
            repeated.extend([v, w])
    return adj


def _custom_prob_adjacency(n, probs, rng):
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < probs[i]:
                adj[i, j] = adj[j, i] = 1.0
    return adj


def _add_hotspots(adj, count, prob, rng):
    n = adj.shape[0]
    hubs = rng.choice(n, size=count, replace=False)
    for hub in hubs:
        for j in range(n):
            if j != hub and rng.random() < prob:
                adj[hub, j] = adj[j, hub] = 1.0
    return adj, np.sort(hubs)


def _tau_from_adjacency(adj, home_stay):
    """Synthetic travel rates: 20% of home-stay time counts as in-location
    activity, the away fraction splits over neighbours."""
    n = adj.shape[0]
    h = np.broadcast_to(np.asarray(home_stay, float), (n,))
    out = adj.sum(axis=1)
    if np.any(out == 0):
        raise EpilockError("isolated node in generated graph")
    tau = 0.8 * (1.0 - h)[:, None] * adj / out[:, None]
    np.fill_diagonal(tau, 0.2 * h)
    return tau


def trips_to_tau(trips, home_dwell):
    """Travel rates from an origin-destination trip table: away fraction
    of the day times the trip share per destination."""
    trips = np.asarray(trips, dtype=float)
    row = trips.sum(axis=1)
    if np.any(row <= 0):
        raise RowCollapse("a row of the trip table is all zero")
    return (1.0 - np.asarray(home_dwell, float) / MINUTES_PER_DAY)[:, None] * trips / row[:, None]


def generate(config):
    """NetworkData (plus initial susceptibles) for a synthetic config.

    Returns (net, s0, extras) where extras carries generator-specific
    items (hotspot indices, point coordinates, case number).
    """
    rng = np.random.default_rng(config.seed)
    extras = {}
    if config.graph_kind == "three_node_example":
        tau = trips_to_tau(THREE_NODE_TRIPS, THREE_NODE_HOME_DWELL)
        net = NetworkData.from_raw(tau, THREE_NODE_POPULATIONS,
                                   employment=THREE_NODE_POPULATIONS,
                                   home_dwell=THREE_NODE_HOME_DWELL,
                                   location_ids=("A", "B", "C"))
        extras.update(x_a=THREE_NODE_XA.copy(), x_s=THREE_NODE_XS.copy(), r=THREE_NODE_R.copy())
        return net, THREE_NODE_S0.copy(), extras
    if config.graph_kind == "city_suburb":
        N, s0 = CITY_SUBURB_CASES[config.city_suburb_case]
        tau = trips_to_tau(CITY_SUBURB_TRIPS, CITY_SUBURB_HOME_DWELL)
        net = NetworkData.from_raw(tau, N, employment=N,
                                   home_dwell=CITY_SUBURB_HOME_DWELL,
                                   location_ids=("city", "suburb"))
        extras["case"] = config.city_suburb_case
        return net, s0.copy(), extras

    for attempt in range(100):
        if config.graph_kind == "geometric":
            adj, pts = _geometric_adjacency(config.n, config.mean_degree, rng)
            extras["points"] = pts
        elif config.graph_kind == "barabasi_albert":
            adj = _ba_adjacency(config.n, config.ba_links, rng)
        else:
            adj = _custom_prob_adjacency(config.n, np.asarray(config.edge_probs, float), rng)
        if config.hotspot_count:
            adj, hubs = _add_hotspots(adj, config.hotspot_count,
                                      config.hotspot_prob, rng)
            extras["hotspots"] = hubs
        if np.all(adj.sum(axis=1) > 0) and spectral.strongly_connected(adj):
            break
    else:
        raise EpilockError("could not generate a connected graph in 100 attempts")
    extras["degree"] = adj.sum(axis=1)
    tau = _tau_from_adjacency(adj, config.home_stay)
    n = config.n
    N = np.broadcast_to(np.asarray(config.population, float), (n,)).copy()
    home_dwell = MINUTES_PER_DAY * (1.0 - tau.sum(axis=1))
    net = NetworkData.from_raw(tau, N, employment=N, home_dwell=home_dwell)
    s0 = rng.uniform(config.s0_range[0], config.s0_range[1], size=n)
    return net, s0, extras


def perturb_noise(net, theta, seed=0):
    """Gaussian noise with variance theta * tau_ij^2 per entry, clipped at
    zero, with every row rescaled so home-stay time is preserved."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    tau = net.travel.tau.copy()
    if theta > 0:
        rng = np.random.default_rng(seed)
        noisy = np.maximum(tau + rng.normal(0.0, 1.0, tau.shape) * np.sqrt(theta) * tau, 0.0)
        row_new = noisy.sum(axis=1)
        if np.any(row_new <= 0):
            raise RowCollapse("noise zeroed an entire travel row")
        tau = noisy * (tau.sum(axis=1) / row_new)[:, None]
    return NetworkData(populations=net.populations, employment=net.employment,
                       cost_coeffs=net.cost_coeffs, travel=TravelMatrix(tau),
                       home_dwell=net.home_dwell, location_ids=net.location_ids)


def perturb_dropout(net, p, seed=0):
    """Zero a p-fraction of each row's off-diagonal travel entries and
    renormalise the row; the diagonal is protected so the constrained
    reduction stays applicable."""
    if not (0.0 <= p < 1.0):
        raise ValueError("p must lie in [0, 1)")
    tau = net.travel.tau.copy()
    n = tau.shape[0]
    rng = np.random.default_rng(seed)
    k = int(round(p * n))
    for i in range(n):
        if k == 0:
            continue
        candidates = np.delete(np.arange(n), i)
        drop = rng.choice(candidates, size=min(k, n - 1), replace=False)
        tau[i, drop] = 0.0
    row_new = tau.sum(axis=1)
    if np.any(row_new <= 0):
        raise RowCollapse("dropout zeroed an entire travel row")
    tau *= (net.travel.tau.sum(axis=1) / row_new)[:, None]
    return NetworkData(populations=net.populations, employment=net.employment,
                       cost_coeffs=net.cost_coeffs, travel=TravelMatrix(tau),
                       home_dwell=net.home_dwell, location_ids=net.location_ids)


def density_scaled_linearization(factors, s0, densities, h_exponent, k_scale, params):
    """Two-class linearisation with transmission proportional to a power
    of population density: beta_s at location l is k * p_l^h."""
    beta_l = k_scale * np.asarray(densities, float) ** h_exponent
    n = factors.n
    A = factors.flow_matrix()
    SA = np.asarray(s0, float)[:, None] * A
    W = beta_l[:, None] * SA
    topleft = params.alpha_hat * W - (params.epsilon + params.r_a) * np.eye(n)
    return np.block([[topleft, W],
                     [params.epsilon * np.eye(n), -params.r_s * np.eye(n)]]), beta_l


def density_scaled_beta(factors, s0, densities, h_exponent, params, target_growth):
    """Calibrate the density-scaled transmission profile to the growth
    target and return (beta vector, per-location b1, scaling constant)."""
    densities = np.asarray(densities, float)
    if np.any(densities <= 0) or h_exponent < 0:
        raise ValueError("densities must be positive and the exponent nonnegative")

    def growth(k_scale):
        M, _ = density_scaled_linearization(factors, s0, densities, h_exponent,
                                            k_scale, params)
        return perron(M).value

    lo, hi = 0.0, 1.0
    for _ in range(60):
        if growth(hi) >= target_growth:
            break
        hi *= 2.0
    else:
        raise CalibrationRange("density-scaled calibration could not bracket the target")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if growth(mid) < target_growth:
            lo = mid
        else:
            hi = mid
    k_scale = 0.5 * (lo + hi)
    beta_l = k_scale * densities ** h_exponent
    a = params.alpha
    b1_l = (beta_l * params.epsilon + params.alpha_hat * beta_l * (params.r_s - a)) \
        / ((params.epsilon + params.r_a - a) * (params.r_s - a))
    return beta_l, b1_l, k_scale


def solve_density_scaled(factors, params, s0, densities, h_exponent, target_growth):
    """Optimal lockdown under density-scaled transmission: the reduction
    goes through with P = B^T diag(b1_l * s0_l) C and a unit decay target."""
    from .balancing import StabilityScalingInstance, solve_unconstrained
    beta_l, b1_l, k_scale = density_scaled_beta(factors, s0, densities,
                                                h_exponent, params, target_growth)
    P = factors.B.T @ ((b1_l * np.asarray(s0, float))[:, None] * factors.C)
    inst = StabilityScalingInstance(P=P, D_diag=np.ones(factors.n),
                                    costs=factors.cost_coeffs)
    z, u, bal, residuals = solve_unconstrained(inst)
    return np.minimum(z, 1.0), beta_l


def symptomatic_activity_scaling(factors, params, s0, kappa, target_growth):
    """Symptomatic individuals travel at a fraction kappa of the others:
    equivalent to dividing the transmission ratio by kappa and
    recalibrating the free rate to the same growth target."""
    if not (0.0 < kappa <= 1.0):
        raise ValueError("kappa must lie in (0, 1]; use the SIR family for kappa=0")
    if params.family != COVID:
        raise ValueError("activity scaling applies to the two-class family")
    scaled = DiseaseParams(family=params.family, alpha=params.alpha,
                           epsilon=params.epsilon, r_a=params.r_a,
                           r_s=params.r_s, gamma=params.gamma,
                           alpha_hat=params.alpha_hat / kappa)
    return calibrate_beta(factors, scaled, s0, target_growth)


def random_permutation_study(net, s0, params_template, target_growth, field_name,
                             repeats, seed=0, alpha=None):
    """Re-solve after randomly permuting one input field, keeping all
    others fixed; returns the stacked optimal activity vectors."""
    allowed = ("degree", "home_stay", "population", "employment", "s0")
    if field_name not in allowed:
        raise ValueError(f"field must be one of {allowed}")
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(repeats):
        perm = rng.permutation(net.n)
        net_p, s0_p = _apply_permutation(net, s0, field_name, perm, rng)
        factors = build_flow_matrix(net_p)
        params = calibrate_beta(factors, params_template, s0_p, target_growth)
        report = solve(factors, params, s0_p)
        rows.append(report.z_star)
    return np.asarray(rows)


def _apply_permutation(net, s0, field_name, perm, rng):
    tau = net.travel.tau
    N, e, h = net.populations, net.employment, net.home_dwell
    s0 = np.asarray(s0, float)
    if field_name == "degree":
        # fix the graph, permute every nodal attribute together
        return (NetworkData.from_raw(tau, N[perm], e[perm], h,
                                     location_ids=net.location_ids), s0[perm])
    if field_name == "population":
        N = N[perm]
    elif field_name == "employment":
        e = e[perm]
    elif field_name == "s0":
        s0 = s0[perm]
    else:  # home_stay: move the away-fraction but keep destination shares
        shares = tau / tau.sum(axis=1)[:, None]
        away = (1.0 - h / MINUTES_PER_DAY)[perm]
        tau = away[:, None] * shares
        h = h[perm]
    return (NetworkData.from_raw(tau, N, e, h, location_ids=net.location_ids), s0)
