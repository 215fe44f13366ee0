"""Command-line front end: ingest -> calibrate -> solve -> simulate ->
compare -> sweep, emitting deterministic CSV artifacts plus a metadata
echo so downstream plotting stays fully decoupled.

Exit codes: 0 success; 2 validation problem (message names the offending
field); 3 numerical non-convergence (partial artifacts written with a
.partial suffix).
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .balancing import check_high_spread, solve
from .errors import EpilockError, NonConvergence
from .ingest import RawCountyTables, load_manifest, write_bundle
from .model import (COVID, SIR, SIS, CostKind, DiseaseParams,
                    assemble_linearization, build_flow_matrix, lockdown_cost)
from .presets import PRESETS, get_preset
from .simulate import PolicySpec, simulate, uniform_decay_matched
from .spectral import alpha_to_r, calibrate_beta, perron, r_to_alpha, reproduction_number
from .synth import SynthConfig, generate, perturb_dropout, perturb_noise

FMT = "%.12g"


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return FMT % x
    return str(x)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_metadata(out_dir, command, args, seeds=()):
    meta = {
        "command": command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "version": __version__,
        "numpy": np.__version__,
        "seeds": list(seeds),
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load_params(source, family, alpha, target_growth=None):
    """Params from a preset name or a calibrate-emitted JSON file.

    Returns (params_template_or_params, growth_target, calibrated_flag).
    """
    if source in PRESETS:
        if alpha is None:
            raise EpilockError("--alpha is required when --params is a preset")
        pre = get_preset(source)
        params = pre.params(family=family, alpha=alpha)
        growth = pre.initial_growth if target_growth is None else target_growth
        return params, growth, False
    with open(source, encoding="utf-8") as fh:
        data = json.load(fh)
    if family is not None and data.get("family") not in (None, family):
        raise EpilockError(f"params file family={data.get('family')!r} "
                           f"conflicts with --model {family}")
    params = DiseaseParams(
        family=data["family"], alpha=alpha if alpha is not None else data["alpha"],
        beta_s=data.get("beta_s", 0.0), beta_a=data.get("beta_a", 0.0),
        epsilon=data.get("epsilon", 0.0), r_a=data.get("r_a", 0.0),
        r_s=data.get("r_s", 0.0), gamma=data.get("gamma", 0.0),
        alpha_hat=data.get("alpha_hat"))
    return params, target_growth, params.transmission() > 0


def _calibrated(bundle, source, family, alpha, target_growth=None):
    factors = build_flow_matrix(bundle.net)
    params, growth, done = _load_params(source, family, alpha, target_growth)
    if not done:
        if growth is None:
            raise EpilockError("--target-growth is required with this params file")
        params = calibrate_beta(factors, params, bundle.s0, growth)
    return factors, params


def _resolve_policy(name, bundle, factors, params, report):
    """Benchmark policy vector cost-matched to the optimal report."""
    try:
        policy = PolicySpec.parse(name)
    except ValueError as exc:
        raise EpilockError(str(exc)) from None
    partition = None
    if policy.kind == "two_param":
        partition = bundle.city_mask()
        if not partition.any():
            raise EpilockError("two_param policy needs a city_group in the manifest")
    return policy.resolve(factors, params, report, s0=bundle.s0,
                          state0=bundle.state0, partition=partition)


# ---------------------------------------------------------------------------
# subcommands

def cmd_build(args):
    bundle = load_manifest(args.manifest)
    write_bundle(args.out, bundle.raw, constants=bundle.constants,
                 city_group=bundle.city_group, as_of=bundle.as_of)
    _write_metadata(args.out, "build", args)
    return 0


def cmd_calibrate(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    factors, params = _calibrated(bundle, args.params, args.model,
                                  args.alpha, args.target_growth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "family": params.family, "alpha": params.alpha,
        "beta_s": params.beta_s, "beta_a": params.beta_a,
        "epsilon": params.epsilon, "r_a": params.r_a, "r_s": params.r_s,
        "gamma": params.gamma, "alpha_hat": params.alpha_hat,
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_solve(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    factors, params = _calibrated(bundle, args.params, args.model, args.alpha,
                                  args.target_growth)
    kind = CostKind.parse(args.cost)
    report = solve(factors, params, bundle.s0, kind)
    hs = check_high_spread(factors, params, bundle.s0)
    out = Path(args.out)
    _write_csv(out / "solve.csv",
               ("location_id", "z_star", "cost_coeff", "high_spread"),
               [(i, z, c, bool(h)) for i, z, c, h in
                zip(factors.location_ids, report.z_star, factors.cost_coeffs, hs)])
    summary = {
        "cost": report.cost, "cost_kind": kind.label(),
        "lambda_achieved": report.lambda_achieved, "method": report.method,
        "high_spread_holds": report.high_spread_holds,
        "unconstrained_exceeds_unit": report.unconstrained_exceeds_unit,
        "clamped": report.clamped, "alpha": params.alpha,
        "scaling_spread": report.scaling_spread,
        "residuals": {k: float(v) for k, v in report.residuals.items()},
        "iterations": {k: int(v) for k, v in report.iterations.items()},
    }
    with open(out / "solve_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_metadata(out, "solve", args)
    return 0


def _trajectory_rows(traj):
    if traj.family == SIS:
        per_loc = traj.states["x"]
        cum = traj.states["cum_inflow"]
        for k, t in enumerate(traj.times):
            for i, loc in enumerate(traj.location_ids):
                x = per_loc[k, i]
                yield (t, loc, 1.0 - x, x, 0.0,
                       x * traj.populations[i],
                       (per_loc[0, i] + cum[k, i]) * traj.populations[i])
        return
    s, xa, xs = traj.states["s"], traj.states["x_a"], traj.states["x_s"]
    for k, t in enumerate(traj.times):
        for i, loc in enumerate(traj.location_ids):
            yield (t, loc, s[k, i], xa[k, i], xs[k, i],
                   (xa[k, i] + xs[k, i]) * traj.populations[i],
                   (1.0 - s[k, i]) * traj.populations[i])


def _policy_z(args, bundle, factors, params):
    spec = args.policy
    if spec == "ours":
        return solve(factors, params, bundle.s0).z_star
    if spec == "none":
        return np.ones(factors.n)
    if spec.startswith("uniform:"):
        return np.full(factors.n, float(spec.split(":", 1)[1]))
    if spec.startswith("file:"):
        path = spec.split(":", 1)[1]
        table = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                table[row["location_id"]] = float(row["z_star"])
        return np.array([table[i] for i in factors.location_ids])
    raise EpilockError(f"unknown policy spec {spec!r} "
                       "(use ours, none, uniform:<z>, file:<solve.csv>)")


def cmd_simulate(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    factors, params = _calibrated(bundle, args.params, args.model, args.alpha,
                                  args.target_growth)
    z = _policy_z(args, bundle, factors, params)
    state0 = bundle.state0
    if params.family == SIS:
        from .simulate import EpidemicState
        state0 = EpidemicState(family=SIS, x=state0.x_a + state0.x_s)
    elif params.family == SIR:
        from .simulate import make_covid_state
        state0 = make_covid_state(s=state0.s, x_a=state0.x_a + state0.x_s,
                                  x_s=np.zeros(factors.n), r=state0.r,
                                  family=SIR)
    traj = simulate(state0, z, factors, params, horizon=args.days,
                    sample_every=args.sample_every, dt=args.dt)
    out = Path(args.out)
    _write_csv(out / "trajectory.csv",
               ("t", "location_id", "s", "x_a", "x_s", "active_persons",
                "cumulative_persons"),
               _trajectory_rows(traj))
    _write_csv(out / "aggregate.csv",
               ("t", "active_persons", "cumulative_persons",
                "reported_cumulative"),
               [(t, a, c, c * bundle.constants["reporting_rate"])
                for t, a, c in zip(traj.times, traj.active_persons,
                                   traj.cumulative_persons)])
    _write_metadata(out, "simulate", args)
    return 0


def cmd_compare(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    factors, params = _calibrated(bundle, args.params, args.model, args.alpha,
                                  args.target_growth)
    report = solve(factors, params, bundle.s0)
    policies = args.policies.split(",")
    rows = []
    agg_rows = []
    for name in policies:
        z, info = _resolve_policy(name, bundle, factors, params, report)
        lam = perron(assemble_linearization(factors, z, params, bundle.s0)).value
        traj = simulate(bundle.state0, z, factors, params, horizon=args.days,
                        sample_every=args.sample_every, dt=args.dt)
        cost = lockdown_cost(z, factors.cost_coeffs)
        rows.append((name, cost, lam, traj.active_persons[-1],
                     traj.cumulative_persons[-1]))
        for t, a, c in zip(traj.times, traj.active_persons,
                           traj.cumulative_persons):
            agg_rows.append((name, t, a, c))
    out = Path(args.out)
    _write_csv(out / "comparison.csv",
               ("policy", "cost", "lambda", "final_active_persons",
                "final_cumulative_persons"), rows)
    _write_csv(out / "comparison_curves.csv",
               ("policy", "t", "active_persons", "cumulative_persons"),
               agg_rows)
    _write_metadata(out, "compare", args)
    return 0


SWEEPABLE = ("alpha", "growth", "gamma", "epsilon", "alpha_hat")


def cmd_sweep(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    if args.vary not in SWEEPABLE:
        raise EpilockError(f"--vary must be one of {SWEEPABLE}")
    lo, hi, steps = args.range.split(":")
    values = np.linspace(float(lo), float(hi), int(steps))
    pre = get_preset(args.params) if args.params in PRESETS else None
    if pre is None:
        raise EpilockError("sweep expects a preset name for --params")
    if args.alpha is None and args.vary != "alpha":
        raise EpilockError("--alpha is required unless sweeping alpha")
    factors = build_flow_matrix(bundle.net)
    rows = []
    for v in values:
        gamma, eps, ahat = pre.gamma, pre.epsilon, pre.alpha_hat
        growth = pre.initial_growth if args.target_growth is None else args.target_growth
        alpha = args.alpha
        if args.vary == "alpha":
            alpha = float(v)
        elif args.vary == "growth":
            growth = float(v)
        elif args.vary == "gamma":
            gamma = float(v)
        elif args.vary == "epsilon":
            eps = float(v)
        else:
            ahat = float(v)
        template = DiseaseParams(family=args.model, alpha=alpha,
                                 epsilon=eps if args.model == COVID else 0.0,
                                 r_a=gamma if args.model != SIS else 0.0,
                                 r_s=gamma if args.model == COVID else 0.0,
                                 gamma=gamma,
                                 alpha_hat=ahat if args.model == COVID else None)
        params = calibrate_beta(factors, template, bundle.s0, growth)
        report = solve(factors, params, bundle.s0)
        zu = uniform_decay_matched(factors, params, bundle.s0)
        cost_u = lockdown_cost(np.full(factors.n, zu), factors.cost_coeffs)
        eff = report.cost / cost_u if cost_u > 0 else float("nan")
        z = report.z_star
        rows.append((v, float(np.min(z)), float(np.median(z)), float(np.max(z)),
                     report.cost, cost_u, eff))
    out = Path(args.out)
    _write_csv(out / "sweep.csv",
               ("value", "z_min", "z_median", "z_max", "cost_ours",
                "cost_uniform_decay_matched", "efficiency"), rows)
    _write_metadata(out, "sweep", args)
    return 0


def cmd_synth(args):
    with open(args.config, encoding="utf-8") as fh:
        raw_cfg = json.load(fh)
    cfg = SynthConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                         for k, v in raw_cfg.items()})
    net, s0, extras = generate(cfg)
    rate = 0.14
    cases = (1.0 - s0) * rate * net.populations
    raw = RawCountyTables(
        ids=net.location_ids, trips=net.travel.tau.copy(),
        home_dwell=net.home_dwell, population=net.populations,
        employment=net.employment, cases=cases,
        deaths=np.zeros(net.n))
    hubs = [net.location_ids[i] for i in extras.get("hotspots", [])]
    write_bundle(args.out, raw, constants={"reporting_rate": rate},
                 city_group=hubs, as_of="synthetic")
    _write_metadata(args.out, "synth", args, seeds=[cfg.seed])
    return 0


def cmd_perturb(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    kind, _, level_text = args.kind.partition(":")
    levels = [float(x) for x in level_text.split(",")] if level_text else [0.0]
    if kind not in ("noise", "dropout", "density", "activity"):
        raise EpilockError("--kind must be noise:<thetas>, dropout:<ps>, "
                           "density:<hs> or activity:<kappas>")
    if kind == "density" and bundle.raw.density is None:
        raise EpilockError("density study needs a density.csv in the bundle")
    mask = bundle.city_mask()

    def one_run(level, seed):
        if kind == "noise":
            net2 = perturb_noise(bundle.net, level, seed)
        elif kind == "dropout":
            net2 = perturb_dropout(bundle.net, level, seed)
        else:
            net2 = bundle.net
        factors2 = build_flow_matrix(net2)
        if kind == "density":
            from .synth import solve_density_scaled
            pre = get_preset(args.params)
            params2, _, _ = _load_params(args.params, args.model, args.alpha)
            z, _ = solve_density_scaled(
                factors2, params2, bundle.s0, bundle.raw.density, level,
                args.target_growth or pre.initial_growth)
            return (float(z[mask].mean()), float(z[~mask].mean()),
                    "balancing", bool(np.any(z >= 1.0)))
        params2 = _calibrated_for_net(bundle, factors2, args)
        if kind == "activity":
            from .synth import symptomatic_activity_scaling
            pre = get_preset(args.params)
            params2 = symptomatic_activity_scaling(
                factors2, params2, bundle.s0, level,
                args.target_growth or pre.initial_growth)
        rep_solve = solve(factors2, params2, bundle.s0)
        z = rep_solve.z_star
        return (float(z[mask].mean()), float(z[~mask].mean()),
                rep_solve.method, rep_solve.unconstrained_exceeds_unit)

    detail = []
    summary = []
    for level in levels:
        repeats = 1 if kind in ("activity", "density") else args.repeats
        seeds = [args.seed + r for r in range(repeats)]
        if args.threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                results = list(pool.map(lambda s: one_run(level, s), seeds))
        else:
            results = [one_run(level, s) for s in seeds]
        stats = {"city": [], "rest": []}
        for seed, (zc, zr, method, exceeds) in zip(seeds, results):
            detail.append((kind, level, seed, zc, zr, method, exceeds))
            stats["city"].append(zc)
            stats["rest"].append(zr)
        for group in ("city", "rest"):
            vals = np.asarray(stats[group])
            summary.append((kind, level, group, vals.mean(), vals.min(),
                            vals.max()))
    out = Path(args.out)
    _write_csv(out / "perturb_detail.csv",
               ("kind", "level", "seed", "z_city_mean", "z_rest_mean",
                "method", "unconstrained_exceeds_unit"), detail)
    _write_csv(out / "perturb_summary.csv",
               ("kind", "level", "group", "mean", "min", "max"), summary)
    _write_metadata(out, "perturb", args,
                    seeds=list(range(args.seed, args.seed + args.repeats)))
    return 0


def _calibrated_for_net(bundle, factors, args):
    params, growth, done = _load_params(args.params, args.model, args.alpha,
                                        args.target_growth)
    if not done:
        params = calibrate_beta(factors, params, bundle.s0, growth)
    return params


def cmd_r0(args):
    bundle = load_manifest(Path(args.bundle) / "manifest.json")
    factors, params = _calibrated(bundle, args.params, COVID,
                                  args.alpha if args.alpha is not None else 0.0,
                                  args.target_growth)
    rows = []
    if args.r is not None:
        alpha = r_to_alpha(params, args.r)
        rows.append((alpha, args.r,
                     reproduction_number(factors, np.ones(factors.n), params,
                                         bundle.s0)))
    else:
        r = alpha_to_r(params, alpha=params.alpha)
        rows.append((params.alpha, r,
                     reproduction_number(factors, np.ones(factors.n), params,
                                         bundle.s0)))
    out = Path(args.out)
    _write_csv(out / "r0.csv", ("alpha", "r_equivalent", "R_t0_no_lockdown"),
               rows)
    _write_metadata(out, "r0", args)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="epilock",
                                description="stabilising-lockdown toolkit")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("EPILOCK_THREADS", "1")),
                   help="fan-out across independent runs (results identical)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        sp.add_argument("--bundle", required=True)
        sp.add_argument("--params", required=True,
                        help="preset name or calibrated params JSON")
        if model:
            sp.add_argument("--model", default=COVID, choices=[SIS, SIR, COVID])
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--target-growth", type=float, default=None)
        sp.add_argument("--out", required=True)

    b = sub.add_parser("build", help="ingest a manifest into a canonical bundle")
    b.add_argument("--manifest", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    c = sub.add_parser("calibrate", help="emit calibrated disease parameters")
    common(c)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("solve", help="optimal stabilising lockdown")
    common(s)
    s.add_argument("--cost", default="inverse",
                   help="inverse | power:<k> | capped:<C>")
    s.set_defaults(func=cmd_solve)

    si = sub.add_parser("simulate", help="trajectory under a policy")
    common(si)
    si.add_argument("--policy", default="ours")
    si.add_argument("--days", type=float, default=500.0)
    si.add_argument("--dt", type=float, default=0.1)
    si.add_argument("--sample-every", type=float, default=1.0)
    si.set_defaults(func=cmd_simulate)

    cp = sub.add_parser("compare", help="cost-matched policy comparison")
    common(cp)
    cp.add_argument("--policies",
                    default="ours,none,uniform,random:0,bounded")
    cp.add_argument("--days", type=float, default=500.0)
    cp.add_argument("--dt", type=float, default=0.1)
    cp.add_argument("--sample-every", type=float, default=5.0)
    cp.set_defaults(func=cmd_compare)

    sw = sub.add_parser("sweep", help="parameter sensitivity sweep")
    common(sw)
    sw.add_argument("--vary", required=True, choices=SWEEPABLE)
    sw.add_argument("--range", required=True, help="lo:hi:steps")
    sw.set_defaults(func=cmd_sweep)

    sy = sub.add_parser("synth", help="generate a synthetic bundle")
    sy.add_argument("--config", required=True)
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)

    pe = sub.add_parser("perturb", help="robustness study")
    common(pe)
    pe.add_argument("--kind", required=True,
                    help="noise:<thetas> | dropout:<ps> | activity:<kappas>")
    pe.add_argument("--repeats", type=int, default=50)
    pe.add_argument("--seed", type=int, default=0)
    pe.set_defaults(func=cmd_perturb)

    r = sub.add_parser("r0", help="reproduction-number reporting")
    common(r, model=False)
    r.add_argument("--r", type=float, default=None)
    r.set_defaults(func=cmd_r0)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonConvergence as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        _mark_partial(getattr(args, "out", None))
        return 3
    except (EpilockError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _mark_partial(out):
    if not out:
        return
    out = Path(out)
    if out.is_dir():
        for f in out.glob("*.csv"):
            f.rename(f.with_suffix(f.suffix + ".partial"))


if __name__ == "__main__":
    sys.exit(main())
