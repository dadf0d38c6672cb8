import json
import os
import unittest
from unittest.mock import patch

import pytest

from hardylab.brownian_lab import ALPHA0
from hardylab.cli_reports import DEFAULT_BINS, EXIT_FAILED, EXIT_OK, EXIT_USAGE, build_parser, resolve_scale, run
from hardylab.exit_monitor import ExitBudgetError
from hardylab.inequality_suite import EXACT_CHECKS
from hardylab.martingale_core import constant_martingale, random_martingale, save_table
from hardylab.report_store import load_reports
from hardylab.settings import Settings

SMALL_SUITE = ["verify-suite", "--n", "2", "--grid", "8", "--degree", "2", "--seeds", "2",
               "--scalar-samples", "1000"]


@pytest.fixture(autouse=True)
def clean_env():
    """Keep HARDYLAB_* variables and .env files out of the tests."""
    env = {k: v for k, v in os.environ.items() if not k.startswith("HARDYLAB_")}
    with patch.dict(os.environ, env, clear=True), patch("hardylab.settings.load_dotenv"):
        yield


class TestVerifySuite:

    def test_small_suite_passes(self, tmp_path):
        """Test the exact suite and scalar sub-suite exit 0 and write every record."""
        out = tmp_path / "suite.ndjson"
        assert run(SMALL_SUITE + ["--out", str(out)]) == EXIT_OK
        records, summary = load_reports(str(out))
        assert len(records) == 2 * len(EXACT_CHECKS) + 4
        assert summary["failed"] == 0
        assert os.path.exists(f"{out}.meta.json")

    def test_byte_identical_across_threads(self, tmp_path):
        """Test the report does not depend on the thread count."""
        outputs = []
        for threads in ("1", "4"):
            out = tmp_path / f"suite{threads}.ndjson"
            assert run(SMALL_SUITE + ["--threads", threads, "--out", str(out)]) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_csv_format(self, tmp_path):
        """Test --format csv writes a header plus one row per record."""
        out = tmp_path / "suite.csv"
        assert run(SMALL_SUITE + ["--format", "csv", "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("check,lhs,rhs")
        assert len(lines) == 1 + 2 * len(EXACT_CHECKS) + 4

    def test_stdout_when_no_out(self, capsys):
        """Test records go to stdout without --out."""
        assert run(["verify-suite", "--n", "1", "--grid", "8", "--degree", "1", "--seeds", "1",
                    "--checks", "davis", "--scalar-samples", "0"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert json.loads(lines[0])["check"] == "davis"
        assert "summary" in json.loads(lines[-1])

    def test_convexity_records(self, tmp_path):
        """Test the convexity and Laplacian records are appended on request."""
        out = tmp_path / "suite.ndjson"
        assert run(["verify-suite", "--n", "1", "--grid", "8", "--degree", "1", "--seeds", "1",
                    "--checks", "davis", "--scalar-samples", "0", "--convexity-trials", "5",
                    "--sweep-points", "51", "--out", str(out)]) == EXIT_OK
        records, _ = load_reports(str(out))
        assert [r["check"] for r in records] == ["davis", "complex_convexity", "laplacian"]


class TestUsageErrors(unittest.TestCase):

    def test_unknown_subcommand(self):
        """Test an unknown subcommand exits 2."""
        self.assertEqual(run(["prove-everything"]), EXIT_USAGE)

    def test_grid_not_power_of_two(self):
        """Test --grid 12 exits 2."""
        self.assertEqual(run(["verify-suite", "--grid", "12", "--seeds", "1"]), EXIT_USAGE)

    def test_degree_too_large(self):
        """Test a degree at the Nyquist frequency exits 2."""
        self.assertEqual(run(["verify-suite", "--grid", "8", "--degree", "4", "--seeds", "1"]), EXIT_USAGE)

    def test_unknown_check(self):
        """Test an unknown check id exits 2."""
        self.assertEqual(run(["verify-suite", "--grid", "8", "--checks", "doob"]), EXIT_USAGE)

    def test_monte_carlo_check_in_exact_suite(self):
        """Test hardy_thin_thick is refused by verify-suite."""
        self.assertEqual(run(["verify-suite", "--grid", "8", "--checks", "hardy_thin_thick"]), EXIT_USAGE)

    def test_memory_guard(self):
        """Test N^n above the guard exits 2."""
        self.assertEqual(run(["verify-suite", "--n", "5", "--grid", "32", "--seeds", "1",
                              "--scalar-samples", "0"]), EXIT_USAGE)

    def test_bad_environment(self):
        """Test an unparsable HARDYLAB_SEED exits 2."""
        with patch.dict(os.environ, {"HARDYLAB_SEED": "seven"}):
            self.assertEqual(run(["verify-suite"]), EXIT_USAGE)

    def test_missing_input(self):
        """Test a missing --input file exits 2."""
        self.assertEqual(run(["decompose", "davis-garsia", "--input", "/nonexistent/F.npz"]), EXIT_USAGE)

    def test_bad_log_level(self):
        """Test an unknown log level exits 2."""
        self.assertEqual(run(SMALL_SUITE + ["--log-level", "chatty"]), EXIT_USAGE)

    def test_help(self):
        """Test --help exits 0."""
        with patch("sys.stdout"):
            self.assertEqual(run(["--help"]), EXIT_OK)

    def test_defaults_follow_settings(self):
        """Test parser defaults come from the environment."""
        with patch.dict(os.environ, {"HARDYLAB_SEED": "99", "HARDYLAB_GRID": "32"}):
            args = build_parser(Settings(dotenv=False)).parse_args(["verify-suite"])
        self.assertEqual(args.seed, 99)
        self.assertEqual(args.grid, 16)
        self.assertEqual(args.seeds, 100)


class TestDecompose:

    def test_constant_input_gives_zero_b(self, tmp_path, capsys):
        """Test a constant martingale decomposes with no B part."""
        path = tmp_path / "F.npz"
        save_table(constant_martingale(2, 4, 1.0), str(path))
        assert run(["decompose", "davis-garsia", "--input", str(path)]) == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["sum_abs_dB"] == 0.0
        assert data["pass"]

    def test_save_with_prefix(self, tmp_path):
        """Test --out writes G, B and the diagnostics."""
        prefix = tmp_path / "dg"
        assert run(["decompose", "davis-garsia", "--n", "2", "--grid", "8", "--out", str(prefix),
                    "--format", "csv"]) == EXIT_OK
        for suffix in ("_G.csv", "_B.csv", ".json"):
            assert os.path.exists(f"{prefix}{suffix}")

    def test_hardy_rejects_general_input(self, tmp_path):
        """Test decompose hardy on a non-Hardy file exits 2."""
        path = tmp_path / "F.csv"
        save_table(random_martingale(1, 8, seed=1), str(path))
        assert run(["decompose", "hardy", "--input", str(path), "--paths", "64", "--dt", "1e-3",
                    "--max-steps", "100000"]) == EXIT_USAGE


class TestEstimateAlpha:

    def test_estimate_reaches_alpha0(self, tmp_path):
        """Test the estimate is at least alpha0 and exits 0."""
        out = tmp_path / "alpha.ndjson"
        assert run(["estimate-alpha", "--trials", "100", "--grid", "64", "--out", str(out)]) == EXIT_OK
        records, _ = load_reports(str(out))
        assert records[0]["lhs"] >= ALPHA0 - 1e-4
        assert "witness" in records[0]["details"]

    def test_zero_generator(self, capsys):
        """Test the zero generator reports the upper bound."""
        assert run(["estimate-alpha", "--generator", "zero", "--trials", "3"]) == EXIT_OK
        record = json.loads(capsys.readouterr().out.splitlines()[0])
        assert record["details"]["hit_upper_bound"]


class TestSimulatePaths:

    @pytest.mark.slow
    def test_dump_and_statistics(self, tmp_path):
        """Test exit statistics are reported and paths are dumped."""
        out = tmp_path / "paths.ndjson"
        dump = tmp_path / "paths.csv"
        code = run(["simulate-paths", "--paths", "1024", "--dt", "1e-4", "--max-steps", "1000000",
                    "--bins", "16", "--grid", "16", "--degree", "2", "--count", "2",
                    "--dump-paths", str(dump), "--out", str(out)])
        assert code in (EXIT_OK, EXIT_FAILED)
        records, _ = load_reports(str(out))
        assert [r["check"] for r in records] == ["exit_uniformity", "exit_time"]
        assert records[0]["mc"]["paths"] == 1024
        lines = dump.read_text().splitlines()
        assert lines[0] == "path,t,re,im,abs_h"
        assert {line.split(",")[0] for line in lines[1:]} == {"0", "1"}

    def test_exhausted_budget_exits_1(self, capsys):
        """Test ExitBudgetError maps to exit code 1."""
        with patch("hardylab.cli_reports.sample_paths", side_effect=ExitBudgetError("MC budget exhausted")):
            assert run(["simulate-paths", "--paths", "16", "--dt", "1e-3", "--max-steps", "10000"]) == EXIT_FAILED
        assert "max-steps" in capsys.readouterr().err


class TestDecomposeHardy:

    HARDY = ["decompose", "hardy", "--n", "1", "--grid", "8", "--degree", "2", "--paths", "256",
             "--dt", "1e-3", "--max-steps", "100000"]

    def test_stdout_flags_are_json_booleans(self, capsys):
        """Test pass and check flags print as true/false, not strings."""
        assert run(self.HARDY) in (EXIT_OK, EXIT_FAILED)
        data = json.loads(capsys.readouterr().out)
        assert isinstance(data["pass"], bool)
        assert all(isinstance(ok, bool) for ok in data["checks"].values())
        assert isinstance(data["certificate"]["pass"], bool)
        assert isinstance(data["certificate"]["applicable"], bool)

    def test_out_writes_readable_diagnostics(self, tmp_path):
        """Test --out leaves a JSON file that loads back with the pass flag."""
        prefix = tmp_path / "hardy"
        code = run(self.HARDY + ["--out", str(prefix)])
        assert code in (EXIT_OK, EXIT_FAILED)
        with open(f"{prefix}.json") as handle:
            data = json.load(handle)
        assert data["mode"] == "monte-carlo"
        assert data["pass"] is (code == EXIT_OK)
        for suffix in ("_G.npz", "_B.npz"):
            assert os.path.exists(f"{prefix}{suffix}")


class TestWorstRatios:

    def test_page_of_one_check(self, tmp_path, capsys):
        """Test the worst davis ratio comes back one per page."""
        out = tmp_path / "suite.ndjson"
        assert run(SMALL_SUITE + ["--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        assert run(["worst-ratios", str(out), "--check", "davis", "--page-size", "1"]) == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert len(data["stats"]) == 1
        assert data["stats"][0]["check"] == "davis"
        assert data["pagination"]["total_items"] == 2
        assert data["pagination"]["has_next"]

    def test_pages_are_sorted(self, tmp_path, capsys):
        """Test page 0 and page 1 hold decreasing ratios."""
        out = tmp_path / "suite.ndjson"
        assert run(SMALL_SUITE + ["--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        ratios = []
        for page in ("0", "1"):
            assert run(["worst-ratios", str(out), "--check", "davis", "--page-size", "1",
                        "--page", page]) == EXIT_OK
            ratios.append(json.loads(capsys.readouterr().out)["stats"][0]["ratio"])
        assert ratios[0] >= ratios[1]

    def test_missing_report(self):
        """Test a missing report file exits 2."""
        assert run(["worst-ratios", "/nonexistent/suite.ndjson"]) == EXIT_USAGE

    def test_page_size_must_be_positive(self, tmp_path):
        """Test --page-size 0 exits 2."""
        out = tmp_path / "suite.ndjson"
        assert run(SMALL_SUITE + ["--out", str(out)]) == EXIT_OK
        assert run(["worst-ratios", str(out), "--page-size", "0"]) == EXIT_USAGE


class TestHarnessPresets(unittest.TestCase):

    def _resolved(self, argv):
        settings = Settings(dotenv=False)
        return resolve_scale(build_parser(settings).parse_args(argv), settings), settings

    def test_acceptance_simulate_paths(self):
        """Test the acceptance preset gives simulate-paths 10^5 paths and 64 bins."""
        args, _ = self._resolved(["simulate-paths", "--preset", "acceptance"])
        self.assertEqual(args.paths, 100_000)
        self.assertEqual(args.bins, 64)
        self.assertEqual(args.dt, 1e-4)

    def test_acceptance_verify_brownian(self):
        """Test the acceptance preset splits slice paths from harness paths."""
        args, _ = self._resolved(["verify-brownian", "--preset", "acceptance"])
        self.assertEqual(args.paths, 10_000)
        self.assertEqual(args.harness_paths, 100_000)
        self.assertEqual(args.max_steps, 1_000_000)

    def test_explicit_flags_win(self):
        """Test --paths and --bins override the preset."""
        args, _ = self._resolved(["simulate-paths", "--preset", "acceptance", "--paths", "512",
                                  "--bins", "16"])
        self.assertEqual(args.paths, 512)
        self.assertEqual(args.bins, 16)

    def test_desk_follows_settings(self):
        """Test the desk preset falls back to settings and reuses --paths for the harness."""
        with patch.dict(os.environ, {"HARDYLAB_PATHS": "777"}):
            args, settings = self._resolved(["verify-brownian"])
        self.assertEqual(args.paths, 777)
        self.assertEqual(args.harness_paths, 777)
        self.assertEqual(args.dt, settings.dt)
        self.assertEqual(args.bins, DEFAULT_BINS)
