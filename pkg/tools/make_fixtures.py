"""Generate the bundled data fixtures (deterministic, seeded).

Writes two CSV bundles under src/epilock/data/: the three-node example
and a synthetic 62-county state with a five-county "city" cluster that
mirrors the shape of the real networks the solvers target (large, highly
infected urban core; smaller, lightly infected rest).  Run from the repo
root:  python tools/make_fixtures.py
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from epilock.ingest import RawCountyTables, write_bundle  # noqa: E402
from epilock.synth import (THREE_NODE_HOME_DWELL, THREE_NODE_POPULATIONS,  # noqa: E402
                           THREE_NODE_S0, THREE_NODE_TRIPS)

DATA = ROOT / "src" / "epilock" / "data"
REPORTING = 0.14


def three_node_bundle():
    N = THREE_NODE_POPULATIONS
    cases = (1.0 - THREE_NODE_S0) * REPORTING * N
    raw = RawCountyTables(
        ids=("A", "B", "C"),
        trips=THREE_NODE_TRIPS,
        home_dwell=THREE_NODE_HOME_DWELL,
        population=N,
        employment=N.copy(),
        cases=cases,
        deaths=np.zeros(3),
    )
    write_bundle(DATA / "three_node", raw, city_group=["A"], as_of="2020-04-01")


def ny62_bundle(seed=7):
    rng = np.random.default_rng(seed)
    n = 62
    n_city = 5
    ids = tuple(f"county_{i:02d}" for i in range(1, n + 1))
    city = np.zeros(n, dtype=bool)
    city[:n_city] = True

    # geography: city cluster tight in one corner, the rest spread out
    pts = np.empty((n, 2))
    pts[:n_city] = np.array([0.72, 0.28]) + 0.04 * rng.standard_normal((n_city, 2))
    pts[n_city:] = rng.random((n - n_city, 2))

    population = np.empty(n)
    population[:n_city] = np.array([2.6e6, 2.3e6, 1.6e6, 1.45e6, 4.9e5])
    population[n_city:] = np.exp(rng.normal(np.log(1.1e5), 0.75, n - n_city))
    population[n_city:] = np.clip(population[n_city:], 3.0e4, 8.0e5)
    population = np.round(population)

    # the urban core concentrates the state's employment
    emp_rate = np.where(city, rng.uniform(0.66, 0.76, n), rng.uniform(0.18, 0.50, n))
    employment = np.round(population * emp_rate)

    # trips: heavy within-county base, gravity cross terms plus a strong
    # commuter stream into the urban core, and a small floor keeping the
    # matrix dense enough to survive dropout experiments
    local = population * rng.uniform(4.0, 11.0, n)
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    gravity = population[None, :] / (d2 + 0.008)
    np.fill_diagonal(gravity, 0.0)
    share = gravity / gravity.sum(axis=1)[:, None]
    commute = rng.uniform(0.30, 0.60, n)          # share of cross trips into the core
    commute[:n_city] = rng.uniform(0.75, 0.9, n_city)  # city folk stay in the core
    core_weight = population[:n_city] / population[:n_city].sum()
    share = share * (1.0 - commute)[:, None]
    share[:, :n_city] += commute[:, None] * core_weight[None, :]
    # diffuse floor: ~15% of cross trips spread population-weighted over
    # everyone, so heavy noise/dropout cannot isolate any single county
    base = population / population.sum()
    share = 0.85 * share + 0.15 * base[None, :]
    share[np.arange(n), np.arange(n)] = 0.0
    share = share / share.sum(axis=1)[:, None]
    away_share = rng.uniform(0.10, 0.42, n)
    trips = share * (local * away_share)[:, None]
    trips[np.arange(n), np.arange(n)] = local
    trips = np.round(trips, 3)

    # urban home-dwell ran well above the rest of the state in the data
    # this fixture mimics; noise experiments preserve row sums, so this
    # contrast is also what keeps the city/rest ordering stable there
    home_dwell = np.round(np.where(city, rng.uniform(900.0, 960.0, n),
                                   rng.uniform(600.0, 740.0, n)), 1)

    prevalence = np.where(city, rng.uniform(0.005, 0.007, n),
                          rng.uniform(0.0002, 0.0006, n))
    cases = np.round(prevalence * population)
    deaths = np.round(cases * rng.uniform(0.02, 0.06, n))

    # persons per square mile: compact urban core, sprawling rest
    area = np.where(city, rng.uniform(20.0, 120.0, n),
                    rng.uniform(400.0, 1800.0, n))
    density = np.round(population / area, 2)

    raw = RawCountyTables(ids=ids, trips=trips, home_dwell=home_dwell,
                          population=population, employment=employment,
                          cases=cases, deaths=deaths, density=density)
    write_bundle(DATA / "ny62", raw, city_group=[ids[i] for i in range(n_city)],
                 as_of="2020-04-01")
    (DATA / "ny62" / "city_ids.txt").write_text(
        "\n".join(ids[i] for i in range(n_city)) + "\n", encoding="utf-8")


if __name__ == "__main__":
    three_node_bundle()
    ny62_bundle()
    print("fixtures written under", DATA)
