"""Render the pipeline's CSV artifacts into deterministic vector figures.

Five figure kinds:

    comparison    comparison_curves.csv -> cumulative/active curves per policy
    zstar_bars    solve.csv (+ city-id sidecar) -> per-location activity bars
    scatter       solve.csv + attribute csv (id,value) -> z* vs attribute
    sensitivity   sweep.csv -> median line with min-max band vs parameter
    robustness    perturb_summary.csv -> group means with min-max shading

Determinism: fonts rendered as paths, fixed hash salt, no date metadata;
the same input bytes produce the same SVG bytes.  Schema mismatches exit
nonzero with a column diff.
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("SVG")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams.update({
    "svg.hashsalt": "epilock-plots",
    "svg.fonttype": "path",
    "figure.dpi": 100,
    "font.size": 9,
})


class SchemaError(Exception):
    pass


def _read(path, expected):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        got = tuple(reader.fieldnames or ())
        if got != tuple(expected):
            missing = set(expected) - set(got)
            extra = set(got) - set(expected)
            raise SchemaError(
                f"{path}: expected columns {list(expected)}, found {list(got)}"
                f" (missing {sorted(missing)}, unexpected {sorted(extra)})")
        return list(reader)


def _save(fig, out_path):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format=out_path.suffix.lstrip(".") or "svg",
                metadata={"Date": None})
    plt.close(fig)


PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#17becf", "#7f7f7f"]


def comparison(curves_csv, out_path):
    rows = _read(curves_csv, ("policy", "t", "active_persons",
                              "cumulative_persons"))
    series = defaultdict(lambda: ([], [], []))
    order = []
    for r in rows:
        if r["policy"] not in order:
            order.append(r["policy"])
        t, a, c = series[r["policy"]]
        t.append(float(r["t"]))
        a.append(float(r["active_persons"]))
        c.append(float(r["cumulative_persons"]))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    for k, name in enumerate(order):
        t, a, c = series[name]
        color = PALETTE[k % len(PALETTE)]
        ax1.plot(t, a, label=name, color=color, lw=1.4)
        ax2.plot(t, c, label=name, color=color, lw=1.4)
    ax1.set_xlabel("days")
    ax1.set_ylabel("active cases (persons)")
    ax2.set_xlabel("days")
    ax2.set_ylabel("cumulative cases (persons)")
    ax1.legend(frameon=False, fontsize=7)
    for ax in (ax1, ax2):
        ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, out_path)


def zstar_bars(solve_csv, out_path, city_ids_file=None):
    rows = _read(solve_csv, ("location_id", "z_star", "cost_coeff",
                             "high_spread"))
    rows.sort(key=lambda r: r["location_id"])
    ids = [r["location_id"] for r in rows]
    z = np.array([float(r["z_star"]) for r in rows])
    city = set()
    if city_ids_file:
        city = {line.strip() for line in
                Path(city_ids_file).read_text(encoding="utf-8").splitlines()
                if line.strip()}
    colors = [PALETTE[1] if i in city else PALETTE[0] for i in ids]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.14 * len(ids)), 3.0))
    ax.bar(np.arange(len(ids)), z, color=colors, width=0.8)
    ax.set_xticks(np.arange(len(ids)))
    ax.set_xticklabels(ids, rotation=90, fontsize=5)
    ax.set_ylabel("optimal activity z*")
    if city:
        ax.bar([], [], color=PALETTE[1], label="city group")
        ax.bar([], [], color=PALETTE[0], label="rest")
        ax.legend(frameon=False, fontsize=7)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, out_path)


def scatter(solve_csv, attribute_csv, out_path, log_x=False):
    zrows = _read(solve_csv, ("location_id", "z_star", "cost_coeff",
                              "high_spread"))
    with open(attribute_csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = tuple(reader.fieldnames or ())
        if len(cols) != 2 or cols[0] != "id":
            raise SchemaError(f"{attribute_csv}: expected columns "
                              f"('id', '<attribute>'), found {list(cols)}")
        attr_name = cols[1]
        attr = {r["id"]: float(r[attr_name]) for r in reader}
    xs, ys = [], []
    for r in zrows:
        if r["location_id"] not in attr:
            raise SchemaError(f"{attribute_csv}: missing id {r['location_id']}")
        xs.append(attr[r["location_id"]])
        ys.append(float(r["z_star"]))
    fig, ax = plt.subplots(figsize=(4.0, 3.2))
    ax.scatter(xs, ys, s=16, color=PALETTE[0], alpha=0.8, edgecolors="none")
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel(attr_name.replace("_", " "))
    ax.set_ylabel("optimal activity z*")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, out_path)


def sensitivity(sweep_csv, out_path):
    rows = _read(sweep_csv, ("value", "z_min", "z_median", "z_max",
                             "cost_ours", "cost_uniform_decay_matched",
                             "efficiency"))
    v = np.array([float(r["value"]) for r in rows])
    zmin = np.array([float(r["z_min"]) for r in rows])
    zmed = np.array([float(r["z_median"]) for r in rows])
    zmax = np.array([float(r["z_max"]) for r in rows])
    eff = np.array([float(r["efficiency"]) for r in rows])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.fill_between(v, zmin, zmax, color=PALETTE[0], alpha=0.25, lw=0)
    ax1.plot(v, zmed, color=PALETTE[0], lw=1.6, label="median z*")
    ax1.set_xlabel("parameter value")
    ax1.set_ylabel("optimal activity z*")
    ax1.legend(frameon=False, fontsize=7)
    ax2.plot(v, eff, color=PALETTE[2], lw=1.6)
    ax2.set_xlabel("parameter value")
    ax2.set_ylabel("cost ratio vs uniform")
    for ax in (ax1, ax2):
        ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, out_path)


def robustness(summary_csv, out_path):
    rows = _read(summary_csv, ("kind", "level", "group", "mean", "min", "max"))
    groups = defaultdict(lambda: ([], [], [], []))
    for r in rows:
        lev, mean, lo, hi = (float(r["level"]), float(r["mean"]),
                             float(r["min"]), float(r["max"]))
        L, M, LO, HI = groups[r["group"]]
        L.append(lev)
        M.append(mean)
        LO.append(lo)
        HI.append(hi)
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    for k, (group, (L, M, LO, HI)) in enumerate(sorted(groups.items())):
        order = np.argsort(L)
        L, M = np.array(L)[order], np.array(M)[order]
        LO, HI = np.array(LO)[order], np.array(HI)[order]
        color = PALETTE[k % len(PALETTE)]
        ax.fill_between(L, LO, HI, color=color, alpha=0.2, lw=0)
        ax.plot(L, M, color=color, lw=1.6, marker="o", ms=3, label=group)
    ax.set_xlabel("perturbation level")
    ax.set_ylabel("mean optimal activity z*")
    ax.legend(frameon=False, fontsize=7)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, out_path)


FIGURE_KINDS = {
    "comparison": (comparison, 1),
    "zstar_bars": (zstar_bars, 1),
    "scatter": (scatter, 2),
    "sensitivity": (sensitivity, 1),
    "robustness": (robustness, 1),
}


def render(figure_kind, input_csv_paths, out_path, city_ids=None, log_x=False):
    """Dispatch a figure kind onto its input CSVs."""
    if figure_kind not in FIGURE_KINDS:
        raise SchemaError(f"unknown figure kind {figure_kind!r}; "
                          f"choose from {sorted(FIGURE_KINDS)}")
    fn, arity = FIGURE_KINDS[figure_kind]
    if len(input_csv_paths) != arity:
        raise SchemaError(f"{figure_kind} needs {arity} input csv(s), "
                          f"got {len(input_csv_paths)}")
    if figure_kind == "zstar_bars":
        fn(input_csv_paths[0], out_path, city_ids_file=city_ids)
    elif figure_kind == "scatter":
        fn(input_csv_paths[0], input_csv_paths[1], out_path, log_x=log_x)
    else:
        fn(*input_csv_paths, out_path)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="epilock-plot")
    parser.add_argument("figure_kind", choices=sorted(FIGURE_KINDS))
    parser.add_argument("inputs", nargs="+", help="input CSV path(s)")
    parser.add_argument("--out", required=True, help="output SVG/PDF path")
    parser.add_argument("--city-ids", default=None,
                        help="sidecar file with one highlighted id per line")
    parser.add_argument("--log-x", action="store_true")
    args = parser.parse_args(argv)
    try:
        render(args.figure_kind, args.inputs, args.out,
               city_ids=args.city_ids, log_x=args.log_x)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
