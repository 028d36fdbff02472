"""fleet-sp command line: ingest -> fit -> sample -> solve / saa -> evaluate / compare.

Each command reads a config file (overridable by flags), writes its
delimited outputs into the output directory, renders companion figures
unless --no-figures is given, and prints a one-line summary.

Exit codes: 0 success, 2 configuration, 3 input/output, 4 solver.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import benders, plots, saa as saa_mod
from .config import ConfigError, RunConfig, build_default_instance, load_config
from .density import (DensityError, kde_fit, make_scenarios, parametric_fit,
                      read_densities, read_scenarios, write_densities,
                      write_scenarios)
from .ingest import (IngestError, aggregate_daily_demand, parse_trips,
                     read_demand_csv, split_train_test, top_k_locations,
                     write_demand_csv)
from .lpcore import SolverError, solve_mip
from .model import (InfeasibleModelError, ModelError, build_extensive,
                    extract_solution, read_instance, write_instance)

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4


def _threads() -> int:
    raw = os.environ.get("FLEET_SP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"FLEET_SP_THREADS must be an integer, got {raw!r}")


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for key in ("trips", "instance", "out", "k", "cutoff", "family", "variant",
                "solver", "seed", "replications", "scenarios", "bandwidth"):
        val = getattr(args, key, None)
        if val is not None:
            if key == "bandwidth" and isinstance(val, str) and val != "silverman":
                try:
                    val = float(val)
                except ValueError:
                    raise ConfigError(f"bandwidth must be 'silverman' or a number, "
                                      f"got {val!r}")
            setattr(cfg, key, val)
    return cfg.validate()


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_instance(cfg, locations, outdir):
    """Read the configured instance file, or build one from the economic
    defaults for the given locations and persist it."""
    if cfg.instance:
        inst = read_instance(cfg.instance)
        if locations is not None and tuple(locations) != inst.locations:
            raise ModelError(
                f"instance locations {inst.locations} do not match input "
                f"locations {tuple(locations)}")
        return inst
    if locations is None:
        raise ConfigError("no instance file configured and no locations to build one")
    inst = build_default_instance(locations, cfg)
    write_instance(inst, outdir / "instance.csv")
    return inst


def _demand_loader(base: Path):
    def load(ref: str):
        path = Path(ref)
        if not path.is_absolute():
            path = base / path
        series = read_demand_csv(path)
        return {loc: np.asarray(s.counts, dtype=float) for loc, s in series.items()}
    return load


def cmd_ingest(args) -> int:
    cfg = _load_cfg(args)
    if not cfg.trips:
        raise ConfigError("ingest needs a trips CSV (--trips or config)")
    outdir = _outdir(cfg)
    columns = (cfg.pickup_time_column, cfg.pickup_location_column,
               cfg.dropoff_location_column)
    parsed = parse_trips(cfg.trips, columns)
    if not parsed.records:
        raise IngestError("no valid trip records parsed")
    series = aggregate_daily_demand(parsed.records)
    k = min(cfg.k, len(series))
    top = top_k_locations(series, k)
    selected = {loc: series[loc] for loc in top}
    if cfg.cutoff is None:
        write_demand_csv(selected, outdir / "demand.csv")
        print(f"ingest: {len(parsed.records)} records ({parsed.skipped} skipped), "
              f"{len(top)} locations -> {outdir / 'demand.csv'}")
        return 0
    train, test = {}, {}
    for loc in top:
        tr, te = split_train_test(series[loc], cfg.cutoff)
        train[loc], test[loc] = tr, te
    write_demand_csv(train, outdir / "train_demand.csv")
    write_demand_csv(test, outdir / "test_demand.csv")
    n_train = len(next(iter(train.values())))
    n_test = len(next(iter(test.values())))
    print(f"ingest: {len(parsed.records)} records ({parsed.skipped} skipped), "
          f"{len(top)} locations, {n_train}-day train / {n_test}-day test "
          f"-> {outdir}")
    return 0


def _fit_models(series, family, bandwidth):
    models = {}
    for loc, s in series.items():
        samples = np.asarray(s.counts, dtype=float)
        if family == "kde":
            models[loc] = kde_fit(samples, bandwidth)
        else:
            models[loc] = parametric_fit(samples, family)
    return models


def cmd_fit(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(cfg)
    series = read_demand_csv(args.train)
    models = _fit_models(series, cfg.family, cfg.bandwidth)
    write_densities(models, outdir / "densities.csv", samples_path=str(args.train))

    grid_path = outdir / "density_grid.csv"
    grids, hists = {}, {}
    with open(grid_path, "w", encoding="utf-8") as fh:
        fh.write("location,x,pdf\n")
        for loc, model in models.items():
            samples = np.asarray(series[loc].counts, dtype=float)
            lo = min(samples.min(), 0.0)
            hi = samples.max() + 0.25 * (samples.max() - lo + 1.0)
            xs = np.linspace(lo, hi, 200)
            pdf = np.asarray(model.pdf(xs))
            grids[loc] = (xs, pdf)
            hists[loc] = samples
            for xv, pv in zip(xs, pdf):
                fh.write(f"{loc},{xv:.10g},{pv:.10g}\n")
    summary = f"fit: {cfg.family} models for {len(models)} locations -> {grid_path}"
    if not args.no_figures:
        fig = plots.plot_density_grid(grids, hists, outdir / "density_grid.png")
        summary += f" (+ {fig})"
    print(summary)
    return 0


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(cfg)
    densities_path = Path(args.densities)
    models = read_densities(densities_path, _demand_loader(densities_path.parent))
    scen = make_scenarios(models, cfg.scenarios, cfg.seed)
    write_scenarios(scen, outdir / "scenarios.csv")
    print(f"sample: {scen.n_scenarios} scenarios x {len(scen.locations)} "
          f"locations (seed {cfg.seed}) -> {outdir / 'scenarios.csv'}")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(cfg)
    scen = read_scenarios(args.scenarios_file)
    inst = _resolve_instance(cfg, scen.locations, outdir)
    if cfg.solver == "extensive":
        lp = build_extensive(inst, scen, cfg.variant, args.require_full_service)
        out = solve_mip(lp)
        if out.status != "optimal":
            raise InfeasibleModelError("extensive form is infeasible")
        sol = extract_solution(lp, out.x, out.objective, inst)
    else:
        sol, state = benders.run(inst, scen, cfg.variant,
                                 tolerance=args.tolerance,
                                 require_full_service=args.require_full_service,
                                 multi_cut=args.multi_cut,
                                 cut_groups=args.cut_groups, threads=_threads())
        benders.write_convergence_log(state, outdir / "convergence.csv")
        if not args.no_figures:
            plots.plot_convergence(state.log, outdir / "convergence.png")
        if not state.converged:
            raise SolverError("decomposition did not converge within max_iter")
    saa_mod.write_solution_csv(inst.locations, sol.x, outdir / "solution.csv",
                               objective=sol.objective)
    print(f"solve: objective {sol.objective:.6f} ({cfg.solver}, {cfg.variant}) "
          f"-> {outdir / 'solution.csv'}")
    return 0


def cmd_saa(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(cfg)
    densities_path = Path(args.densities)
    models = read_densities(densities_path, _demand_loader(densities_path.parent))
    inst = _resolve_instance(cfg, list(models.keys()), outdir)
    models = {loc: models[loc] for loc in inst.locations}
    config = saa_mod.SaaConfig(replications=cfg.replications,
                               scenarios_per_replication=cfg.scenarios,
                               seed=cfg.seed, solver=cfg.solver)
    report = saa_mod.run_saa(inst, models, config, cfg.variant,
                             require_full_service=args.require_full_service,
                             multi_cut=args.multi_cut,
                             cut_groups=args.cut_groups, threads=_threads())
    saa_mod.write_saa_report(report, outdir / "saa_report.csv")
    if not report.included:
        raise InfeasibleModelError("every SAA replication failed")
    deployed = report.deployed
    saa_mod.write_solution_csv(inst.locations, deployed.x,
                               outdir / "saa_solution.csv",
                               objective=deployed.objective)
    if not args.no_figures:
        plots.plot_saa_report(report, outdir / "saa_report.png")
    print(f"saa: mean objective {report.mean_objective:.6f} "
          f"(std {report.std_objective:.6f}, "
          f"{len(report.included)}/{len(report.replications)} replications, "
          f"M={config.replications} N={config.scenarios_per_replication}) "
          f"-> {outdir / 'saa_report.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(cfg)
    if not cfg.instance:
        raise ConfigError("evaluate needs an instance file (--instance or config)")
    inst = read_instance(cfg.instance)
    x_map = saa_mod.read_solution_csv(args.solution)
    missing = [loc for loc in inst.locations if loc not in x_map]
    if missing:
        raise ModelError(f"solution file lacks locations {missing}")
    x = np.array([x_map[loc] for loc in inst.locations], dtype=float)
    test_series = read_demand_csv(args.test)
    report = saa_mod.evaluate_out_of_sample(inst, x, test_series, cfg.variant,
                                            train_objective=args.train_objective)
    eval_path = outdir / "evaluation.csv"
    with open(eval_path, "w", encoding="utf-8") as fh:
        fh.write("date,profit\n")
        for d, p in zip(report.dates, report.daily_profits):
            fh.write(f"{d.isoformat()},{p:.10g}\n")
    if not args.no_figures:
        plots.plot_out_of_sample(report.dates, report.daily_profits,
                                 outdir / "evaluation.png",
                                 expected=report.expected_profit)
    gap_text = f", gap {report.gap:.4%}" if report.gap is not None else ""
    print(f"evaluate: expected profit {report.expected_profit:.6f} over "
          f"{len(report.dates)} test days{gap_text} -> {eval_path}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(cfg)
    series = read_demand_csv(args.train)
    locations = sorted(series, key=lambda loc: (-series[loc].total, loc))
    inst = _resolve_instance(cfg, locations, outdir)
    series = {loc: series[loc] for loc in inst.locations}
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    counts = [int(v) for v in args.scenario_counts.split(",") if v.strip()]
    rows = []
    for family in families:
        try:
            models = _fit_models(series, family, cfg.bandwidth)
        except DensityError as exc:
            for n in counts:
                rows.append((family, n, None, f"fit_error: {exc}"))
            continue
        for n in counts:
            config = saa_mod.SaaConfig(replications=cfg.replications,
                                       scenarios_per_replication=n,
                                       seed=cfg.seed, solver=cfg.solver)
            report = saa_mod.run_saa(inst, models, config, cfg.variant,
                                     require_full_service=args.require_full_service,
                                     threads=_threads())
            if len(report.included) < len(report.replications):
                rows.append((family, n, None, "infeasible"))
            else:
                rows.append((family, n, report.mean_objective, "ok"))
    cmp_path = outdir / "compare.csv"
    with open(cmp_path, "w", encoding="utf-8") as fh:
        fh.write("family,n_scenarios,objective,status\n")
        for family, n, obj, status in rows:
            obj_s = f"{obj:.17g}" if obj is not None else ""
            fh.write(f"{family},{n},{obj_s},{status}\n")
    if not args.no_figures:
        plots.plot_compare([(f, n, o) for f, n, o, _ in rows],
                           outdir / "compare.png")
    feasible = sum(1 for r in rows if r[3] == "ok")
    print(f"compare: {feasible}/{len(rows)} family x N cells feasible "
          f"-> {cmp_path}")
    return 0


def read_evaluation_csv(path):
    """Rows written by the evaluate command: (ISO date string, profit)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "date,profit":
            raise IngestError(f"{path}: unexpected evaluation header {header!r}")
        for ln in fh:
            if ln.strip():
                d, p = ln.strip().split(",")
                rows.append((d, float(p)))
    return rows


def read_compare_csv(path):
    """Rows written by the compare command: (family, n, objective|None, status)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "family,n_scenarios,objective,status":
            raise IngestError(f"{path}: unexpected compare header {header!r}")
        for ln in fh:
            if ln.strip():
                family, n, obj, status = ln.strip().split(",", 3)
                rows.append((family, int(n), float(obj) if obj else None, status))
    return rows


def _add_common(p, *, figures=False):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="RNG seed")
    if figures:
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering next to the CSV outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fleet-sp",
        description="Car-sharing fleet allocation under demand uncertainty.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="aggregate trip records into daily demand")
    _add_common(p)
    p.add_argument("--trips", help="trip-record CSV")
    p.add_argument("--k", type=int, help="number of top-demand locations")
    p.add_argument("--cutoff", type=date.fromisoformat,
                   help="train/test cutoff date (YYYY-MM-DD)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit demand densities per location")
    _add_common(p, figures=True)
    p.add_argument("--train", required=True, help="training demand CSV")
    p.add_argument("--family",
                   choices=("kde", "gaussian", "laplace", "lognormal", "exponential"))
    p.add_argument("--bandwidth",
                   help="silverman (default) or a fixed positive value")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw a scenario set from fitted densities")
    _add_common(p)
    p.add_argument("--densities", required=True, help="densities CSV from fit")
    p.add_argument("--scenarios", dest="scenarios", type=int,
                   help="number of scenarios N")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("solve", help="solve one scenario set")
    _add_common(p, figures=True)
    p.add_argument("--scenarios", dest="scenarios_file", required=True,
                   help="scenario CSV")
    p.add_argument("--instance", help="instance CSV (built from defaults if absent)")
    p.add_argument("--variant", choices=("as_written", "flow_corrected"))
    p.add_argument("--solver", choices=("extensive", "benders"))
    p.add_argument("--multi-cut", action="store_true",
                   help="one optimality cut per scenario")
    p.add_argument("--cut-groups", type=int,
                   help="scenario groups per iteration (between the single "
                        "aggregated cut and --multi-cut)")
    p.add_argument("--require-full-service", action="store_true",
                   help="demand must be fully served in every scenario")
    p.add_argument("--tolerance", type=float,
                   help="decomposition gap tolerance (default 1e-6 relative)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("saa", help="sample-average approximation sweep")
    _add_common(p, figures=True)
    p.add_argument("--densities", required=True)
    p.add_argument("--instance")
    p.add_argument("--variant", choices=("as_written", "flow_corrected"))
    p.add_argument("--solver", choices=("extensive", "benders"))
    p.add_argument("--replications", type=int, help="replication count M")
    p.add_argument("--scenarios", dest="scenarios", type=int,
                   help="scenarios per replication N")
    p.add_argument("--multi-cut", action="store_true")
    p.add_argument("--cut-groups", type=int)
    p.add_argument("--require-full-service", action="store_true")
    p.set_defaults(func=cmd_saa)

    p = sub.add_parser("evaluate", help="out-of-sample evaluation of a solution")
    _add_common(p, figures=True)
    p.add_argument("--instance", help="instance CSV")
    p.add_argument("--solution", required=True, help="solution CSV (location,x)")
    p.add_argument("--test", required=True, help="test demand CSV")
    p.add_argument("--train-objective", type=float,
                   help="training objective for the gap metric")
    p.add_argument("--variant", choices=("as_written", "flow_corrected"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="KDE vs parametric families over shared seeds")
    _add_common(p, figures=True)
    p.add_argument("--train", required=True, help="training demand CSV")
    p.add_argument("--instance")
    p.add_argument("--families", default="kde,gaussian,laplace,lognormal,exponential")
    p.add_argument("--scenario-counts", default="20",
                   help="comma-separated N values")
    p.add_argument("--replications", type=int)
    p.add_argument("--variant", choices=("as_written", "flow_corrected"))
    p.add_argument("--solver", choices=("extensive", "benders"))
    p.add_argument("--require-full-service", action="store_true")
    p.set_defaults(func=cmd_compare)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fleet-sp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, OSError) as exc:
        print(f"fleet-sp: input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, ModelError, DensityError) as exc:
        print(f"fleet-sp: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
