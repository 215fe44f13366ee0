"""County-table ingestion: CSV schemas, manifest handling, the travel
matrix build, and epidemic-state initialisation from case counts.

Input files are UTF-8 CSVs with a header row.  Columns are fixed:

    trips.csv       origin_id,dest_id,count
    home_dwell.csv  id,median_minutes
    population.csv  id,persons
    employment.csv  id,persons
    cases.csv       id,cumulative_confirmed
    deaths.csv      id,cumulative_deaths
    density.csv     id,persons_per_sqmile          (optional)

A JSON manifest binds the file paths, the as-of date, the designated
city group, and the calibration constants (reporting rate, the national
recovered/confirmed split, the asymptomatic share).
"""

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataInconsistency, DegenerateLocation, DimensionMismatch
from .model import MINUTES_PER_DAY, NetworkData, TravelMatrix
from .simulate import EpidemicState, make_covid_state

REPORTING_RATE = 0.14
NATIONAL_RECOVERED = 8878.0
NATIONAL_CASES = 215215.0
ASYMPTOMATIC_SHARE = 0.86

TABLE_COLUMNS = {
    "trips": ("origin_id", "dest_id", "count"),
    "home_dwell": ("id", "median_minutes"),
    "population": ("id", "persons"),
    "employment": ("id", "persons"),
    "cases": ("id", "cumulative_confirmed"),
    "deaths": ("id", "cumulative_deaths"),
    "density": ("id", "persons_per_sqmile"),
}


@dataclass(frozen=True)
class RawCountyTables:
    ids: tuple
    trips: np.ndarray          # n x n daily counts, origin rows
    home_dwell: np.ndarray     # minutes/day
    population: np.ndarray
    employment: np.ndarray
    cases: np.ndarray
    deaths: np.ndarray
    density: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.ids)
        if self.trips.shape != (n, n):
            raise DimensionMismatch("trip table shape mismatch")
        for name in ("home_dwell", "population", "employment", "cases", "deaths"):
            if getattr(self, name).shape != (n,):
                raise DimensionMismatch(f"{name} length mismatch")
        for name in ("trips", "population", "employment", "cases", "deaths"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} contains negative counts")


def _read_rows(path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        got = tuple(reader.fieldnames or ())
        if got != columns:
            raise DataInconsistency(
                f"{path}: expected columns {columns}, found {got}")
        return list(reader)


def _read_vector(path, columns, ids=None):
    rows = _read_rows(path, columns)
    table = {r[columns[0]]: float(r[columns[1]]) for r in rows}
    if ids is None:
        ids = tuple(sorted(table))
    missing = [i for i in ids if i not in table]
    if missing:
        raise DataInconsistency(f"{path}: missing ids {missing[:5]}")
    return ids, np.array([table[i] for i in ids])


def load_raw_tables(paths):
    """Read the CSV family into RawCountyTables; `paths` maps table name
    to file path.  Trips to ids outside the id set are dropped."""
    ids, population = _read_vector(paths["population"], TABLE_COLUMNS["population"])
    _, home_dwell = _read_vector(paths["home_dwell"], TABLE_COLUMNS["home_dwell"], ids)
    _, employment = _read_vector(paths["employment"], TABLE_COLUMNS["employment"], ids)
    _, cases = _read_vector(paths["cases"], TABLE_COLUMNS["cases"], ids)
    _, deaths = _read_vector(paths["deaths"], TABLE_COLUMNS["deaths"], ids)
    density = None
    if paths.get("density"):
        _, density = _read_vector(paths["density"], TABLE_COLUMNS["density"], ids)
    index = {cid: k for k, cid in enumerate(ids)}
    trips = np.zeros((len(ids), len(ids)))
    for row in _read_rows(paths["trips"], TABLE_COLUMNS["trips"]):
        o, d = row["origin_id"], row["dest_id"]
        if o in index and d in index:  # out-of-scope destinations dropped
            trips[index[o], index[d]] += float(row["count"])
    return RawCountyTables(ids=ids, trips=trips, home_dwell=home_dwell,
                           population=population, employment=employment,
                           cases=cases, deaths=deaths, density=density)


def build_tau(raw):
    """Travel matrix from trips and home-dwell minutes: away fraction of
    the day times each destination's trip share."""
    row = raw.trips.sum(axis=1)
    if np.any(row <= 0):
        bad = raw.ids[int(np.argmin(row))]
        raise DegenerateLocation(
            f"county {bad} reports no in-scope trips; its travel row is undefined")
    if np.any(raw.home_dwell <= 0) or np.any(raw.home_dwell >= MINUTES_PER_DAY):
        raise DataInconsistency("home-dwell minutes must lie in (0, 1440)")
    tau = (1.0 - raw.home_dwell / MINUTES_PER_DAY)[:, None] * raw.trips / row[:, None]
    return TravelMatrix(tau)


def initial_state(raw, N=None, reporting_rate=REPORTING_RATE,
                  national_recovered=NATIONAL_RECOVERED,
                  national_cases=NATIONAL_CASES,
                  asymptomatic_share=ASYMPTOMATIC_SHARE):
    """Epidemic state from confirmed cases and deaths.

    Confirmed counts are inflated by the reporting rate; deaths plus the
    national recovered share of cases are treated as removed; the active
    remainder splits into asymptomatic/symptomatic fractions.
    """
    N = raw.population if N is None else np.asarray(N, float)
    denom = reporting_rate * N
    total = raw.cases / denom
    if np.any(total > 1.0):
        warnings.warn("case counts exceed the reporting-rate ceiling; clamping",
                      stacklevel=2)
        total = np.minimum(total, 1.0)
    recovered = (raw.deaths + raw.cases * (national_recovered / national_cases)) / denom
    active = total - recovered
    if np.any(active < -1e-12):
        raise DataInconsistency("negative active cases after removing recoveries")
    active = np.maximum(active, 0.0)
    x_a = asymptomatic_share * active
    x_s = (1.0 - asymptomatic_share) * active
    s = 1.0 - total
    return make_covid_state(s=s, x_a=x_a, x_s=x_s, r=recovered, t=0.0)


@dataclass(frozen=True)
class Bundle:
    """A loaded data bundle: network, initial state, and metadata."""

    net: NetworkData
    state0: EpidemicState
    raw: RawCountyTables
    constants: dict
    city_group: tuple = ()
    as_of: str = ""

    @property
    def s0(self):
        return self.state0.s

    def city_mask(self):
        ids = self.net.location_ids
        return np.array([i in set(self.city_group) for i in ids])


def load_manifest(manifest_path):
    """Load a manifest JSON and assemble the bundle it describes."""
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = manifest_path.parent
    paths = {k: base / v for k, v in manifest["files"].items()}
    raw = load_raw_tables(paths)
    constants = {
        "reporting_rate": REPORTING_RATE,
        "national_recovered": NATIONAL_RECOVERED,
        "national_cases": NATIONAL_CASES,
        "asymptomatic_share": ASYMPTOMATIC_SHARE,
    }
    constants.update(manifest.get("constants", {}))
    tau = build_tau(raw)
    net = NetworkData.from_raw(
        tau.tau, raw.population, raw.employment, raw.home_dwell,
        location_ids=raw.ids,
        employment_floor=manifest.get("employment_floor"))
    state0 = initial_state(
        raw,
        reporting_rate=constants["reporting_rate"],
        national_recovered=constants["national_recovered"],
        national_cases=constants["national_cases"],
        asymptomatic_share=constants["asymptomatic_share"])
    return Bundle(net=net, state0=state0, raw=raw, constants=constants,
                  city_group=tuple(manifest.get("city_group", ())),
                  as_of=manifest.get("as_of", ""))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_bundle(out_dir, raw, constants=None, city_group=(), as_of=""):
    """Write the canonical normalised bundle; floats go through repr so a
    re-ingest reproduces the arrays bit-exactly."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = raw.ids
    trip_rows = [(o, d, repr(float(raw.trips[i, j])))
                 for i, o in enumerate(ids) for j, d in enumerate(ids)
                 if raw.trips[i, j] != 0.0]
    _write_csv(out / "trips.csv", TABLE_COLUMNS["trips"], trip_rows)
    for name, vec in (("home_dwell", raw.home_dwell), ("population", raw.population),
                      ("employment", raw.employment), ("cases", raw.cases),
                      ("deaths", raw.deaths)):
        _write_csv(out / f"{name}.csv", TABLE_COLUMNS[name],
                   [(i, repr(float(v))) for i, v in zip(ids, vec)])
    files = {name: f"{name}.csv" for name in
             ("trips", "home_dwell", "population", "employment", "cases", "deaths")}
    if raw.density is not None:
        _write_csv(out / "density.csv", TABLE_COLUMNS["density"],
                   [(i, repr(float(v))) for i, v in zip(ids, raw.density)])
        files["density"] = "density.csv"
    manifest = {
        "files": files,
        "as_of": as_of,
        "city_group": list(city_group),
        "constants": constants or {},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out / "manifest.json"
