import numpy as np
import pytest

from fleet_sp.benders import read_convergence_log
from fleet_sp.cli import main, read_compare_csv, read_evaluation_csv
from fleet_sp.density import read_density_grid, read_scenarios
from fleet_sp.ingest import read_demand_csv
from fleet_sp.model import read_instance
from fleet_sp.saa import read_saa_report_csv, read_solution_csv

from conftest import FIXTURES


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def outdir(tmp_path):
    return tmp_path / "out"


class TestSolveFixture:
    def test_benders_solves_bundled_fixture(self, outdir, capsys):
        code = run_cli("solve",
                       "--scenarios", FIXTURES / "scenarios_2loc.csv",
                       "--instance", FIXTURES / "instance_2loc.csv",
                       "--variant", "flow_corrected",
                       "--solver", "benders",
                       "--out", outdir)
        assert code == 0
        printed = capsys.readouterr().out
        assert "objective 800.000000" in printed
        sol = read_solution_csv(outdir / "solution.csv")
        assert sum(sol.values()) <= 10
        assert (outdir / "convergence.csv").exists()
        assert (outdir / "convergence.png").exists()

    def test_extensive_agrees(self, outdir, capsys):
        code = run_cli("solve",
                       "--scenarios", FIXTURES / "scenarios_2loc.csv",
                       "--instance", FIXTURES / "instance_2loc.csv",
                       "--variant", "flow_corrected",
                       "--solver", "extensive",
                       "--out", outdir, "--no-figures")
        assert code == 0
        assert "objective 800.000000" in capsys.readouterr().out


class TestPipeline:
    def run_pipeline(self, outdir, config):
        assert run_cli("ingest", "--config", config) == 0
        assert run_cli("fit", "--config", config,
                       "--train", outdir / "train_demand.csv") == 0
        assert run_cli("sample", "--config", config,
                       "--densities", outdir / "densities.csv") == 0
        assert run_cli("solve", "--config", config,
                       "--scenarios", outdir / "scenarios.csv") == 0
        assert run_cli("saa", "--config", config,
                       "--densities", outdir / "densities.csv",
                       "--instance", outdir / "instance.csv") == 0
        assert run_cli("evaluate", "--config", config,
                       "--instance", outdir / "instance.csv",
                       "--solution", outdir / "saa_solution.csv",
                       "--test", outdir / "test_demand.csv") == 0
        assert run_cli("compare", "--config", config,
                       "--train", outdir / "train_demand.csv",
                       "--instance", outdir / "instance.csv",
                       "--scenario-counts", "4",
                       "--families", "kde,gaussian,laplace") == 0

    def write_config(self, tmp_path, outdir):
        config = tmp_path / "run.cfg"
        config.write_text(
            f"trips = {FIXTURES / 'trips_tiny.csv'}\n"
            f"out = {outdir}\n"
            "k = 2\n"
            "cutoff = 2018-03-09\n"
            "family = kde\n"
            "variant = as_written\n"
            "solver = benders\n"
            "replications = 2\n"
            "scenarios = 6\n"
            "seed = 42\n"
            "capacity = 30\n")
        return config

    def test_end_to_end(self, tmp_path, outdir, capsys):
        config = self.write_config(tmp_path, outdir)
        self.run_pipeline(outdir, config)
        for name in ("train_demand.csv", "test_demand.csv", "densities.csv",
                     "density_grid.csv", "density_grid.png", "scenarios.csv",
                     "instance.csv", "solution.csv", "convergence.csv",
                     "saa_report.csv", "saa_solution.csv", "saa_report.png",
                     "evaluation.csv", "evaluation.png", "compare.csv",
                     "compare.png"):
            assert (outdir / name).exists(), name

        # every emitted CSV round-trips through the package's own readers
        scen = read_scenarios(outdir / "scenarios.csv")
        assert scen.n_scenarios == 6
        inst = read_instance(outdir / "instance.csv")
        assert inst.capacity == 30
        series = read_demand_csv(outdir / "train_demand.csv")
        assert len(series) == 2
        assert len(read_demand_csv(outdir / "test_demand.csv")) == 2
        grid = read_density_grid(outdir / "density_grid.csv")
        assert set(grid) == set(inst.locations)
        assert all(len(x) == 200 for x, _ in grid.values())
        conv = read_convergence_log(outdir / "convergence.csv")
        assert conv and conv[-1].lb <= conv[-1].ub + 1e-9
        report = read_saa_report_csv(outdir / "saa_report.csv")
        assert len(report) == 2 and all(r["converged"] for r in report)
        assert read_solution_csv(outdir / "solution.csv").keys() == set(inst.locations)
        evaluation = read_evaluation_csv(outdir / "evaluation.csv")
        assert len(evaluation) == 4
        compare = read_compare_csv(outdir / "compare.csv")
        assert len(compare) == 3
        assert {c[0] for c in compare} == {"kde", "gaussian", "laplace"}

    def test_idempotent_given_fixed_seeds(self, tmp_path, capsys):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            cfg = tmp_path / f"{out.name}.cfg"
            cfg.write_text(
                f"trips = {FIXTURES / 'trips_tiny.csv'}\n"
                f"out = {out}\nk = 2\ncutoff = 2018-03-09\n"
                "solver = extensive\nreplications = 2\nscenarios = 5\n"
                "seed = 7\ncapacity = 25\n")
            assert run_cli("ingest", "--config", cfg) == 0
            assert run_cli("fit", "--config", cfg, "--no-figures",
                           "--train", out / "train_demand.csv") == 0
            assert run_cli("sample", "--config", cfg,
                           "--densities", out / "densities.csv") == 0
            assert run_cli("saa", "--config", cfg, "--no-figures",
                           "--densities", out / "densities.csv") == 0
        for name in ("train_demand.csv", "scenarios.csv", "saa_solution.csv",
                     "instance.csv"):
            a = (out_a / name).read_bytes()
            b = (out_b / name).read_bytes()
            assert a == b, name
        # the report carries wall-clock columns; the computed values must
        # still agree exactly
        col_a = [ln.split(",")[1] for ln in
                 (out_a / "saa_report.csv").read_text().splitlines()[1:]]
        col_b = [ln.split(",")[1] for ln in
                 (out_b / "saa_report.csv").read_text().splitlines()[1:]]
        assert col_a == col_b


class TestSyntheticLargePipeline:
    def test_twenty_location_wide_tolerance_run(self, tmp_path, capsys):
        # The documented NYC invocation path at synthetic scale: 20
        # locations, seasonal (bimodal) daily rates, wide-tolerance
        # decomposition solve.
        rng = np.random.default_rng(99)
        rows = ["lpep_pickup_datetime,PULocationID,DOLocationID,extra"]
        from datetime import datetime, timedelta
        start = datetime(2016, 7, 1)
        locs = list(range(1, 21))
        for day in range(160):
            d = start + timedelta(days=day)
            weekend = d.weekday() >= 5
            for k, loc in enumerate(locs):
                lam = (6 + 0.5 * k) if weekend else (2 + 0.3 * k)
                for _ in range(rng.poisson(lam)):
                    hh = int(rng.integers(0, 24))
                    rows.append(f"{d:%Y-%m-%d} {hh:02d}:00:00,{loc},"
                                f"{int(rng.choice(locs))},x")
        trips = tmp_path / "trips.csv"
        trips.write_text("\n".join(rows) + "\n")
        out = tmp_path / "out"
        cfg = tmp_path / "run.cfg"
        cutoff = (start + timedelta(days=130)).date().isoformat()
        cfg.write_text(f"trips = {trips}\nout = {out}\nk = 20\n"
                       f"cutoff = {cutoff}\nseed = 2\ncapacity = 150\n"
                       "solver = benders\nscenarios = 8\n")
        assert run_cli("ingest", "--config", cfg) == 0
        assert run_cli("fit", "--config", cfg, "--no-figures",
                       "--train", out / "train_demand.csv") == 0
        assert run_cli("sample", "--config", cfg,
                       "--densities", out / "densities.csv") == 0
        assert run_cli("solve", "--config", cfg, "--no-figures",
                       "--scenarios", out / "scenarios.csv",
                       "--tolerance", "1500") == 0
        conv = read_convergence_log(out / "convergence.csv")
        assert conv[-1].ub - conv[-1].lb < 1500
        sol = read_solution_csv(out / "solution.csv")
        assert len(sol) == 20
        assert sum(sol.values()) <= 150


class TestExitCodes:
    def test_missing_config_file(self, capsys):
        assert run_cli("ingest", "--config", "/nonexistent/run.cfg") == 2

    def test_bad_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus_key = 1\n")
        assert run_cli("ingest", "--config", cfg) == 2

    def test_missing_trips_file(self, tmp_path, capsys):
        assert run_cli("ingest", "--trips", tmp_path / "absent.csv",
                       "--out", tmp_path / "o") == 3

    def test_solver_failure_full_service(self, tmp_path, capsys):
        scen = tmp_path / "scen.csv"
        scen.write_text("scenario,probability,loc_1,loc_2\n0,1,20,20\n")
        code = run_cli("solve", "--scenarios", scen,
                       "--instance", FIXTURES / "instance_2loc.csv",
                       "--variant", "flow_corrected",
                       "--solver", "extensive",
                       "--require-full-service",
                       "--out", tmp_path / "o")
        assert code == 4

    def test_threads_env_validated(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("FLEET_SP_THREADS", "lots")
        code = run_cli("solve", "--scenarios", FIXTURES / "scenarios_2loc.csv",
                       "--instance", FIXTURES / "instance_2loc.csv",
                       "--solver", "benders", "--out", tmp_path / "o")
        assert code == 2


class TestCompareFeasibility:
    def test_heavy_tail_families_reported_infeasible(self, tmp_path, capsys):
        # Multiplicative demand spread: the lognormal fit's tail overshoots
        # the fleet under full service while the gaussian stays inside.
        out = tmp_path / "out"
        train = tmp_path / "train.csv"
        rows = ["location,date,count"]
        vals = {1: [1, 2, 4, 8, 16, 30, 2, 4, 1, 8],
                2: [3, 4, 3, 5, 4, 3, 4, 5, 4, 3]}
        for loc, counts in vals.items():
            for i, c in enumerate(counts):
                rows.append(f"{loc},2018-01-{i+1:02d},{c}")
        train.write_text("\n".join(rows) + "\n")
        cfg = tmp_path / "cmp.cfg"
        cfg.write_text(f"out = {out}\nseed = 23\ncapacity = 50\n"
                       "variant = flow_corrected\nsolver = extensive\n"
                       "replications = 2\n")
        code = run_cli("compare", "--config", cfg, "--train", train,
                       "--families", "gaussian,lognormal",
                       "--scenario-counts", "6",
                       "--require-full-service")
        assert code == 0
        body = (out / "compare.csv").read_text()
        assert "lognormal,6,,infeasible" in body
        gaussian_line = [ln for ln in body.splitlines()
                         if ln.startswith("gaussian")][0]
        assert gaussian_line.endswith(",ok")
