"""Tests for CLI main entry point."""

import json
import logging
import tempfile
import unittest
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import pandas as pd

from bin.cli.main import (
    CLI,
    EXIT_ESTIMATION,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_SUPPORT,
    EXIT_UNEXPECTED,
    build_parser,
    main,
)
from bin.cli.run_config import RunConfig, parse_bounds
from rmst_targeted.dataset import write_csv
from rmst_targeted.logging import ROOT_LOGGER
from rmst_targeted.simulation import generate, get_scenario, truth
from rmst_targeted.types import REPORT_FIELDS, DataValidationException


def run(argv):
    """Run main(argv) and return (exit code, stdout, stderr)."""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        with patch('sys.stderr', new=StringIO()) as fake_err:
            code = main(argv)
    return code, fake_out.getvalue(), fake_err.getvalue()


class CliTestCase(unittest.TestCase):
    """Base class with a simulated study on disk."""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.dir = Path(self.temp_dir.name)
        self.data = generate(get_scenario("S1"), 150, seed=3)
        self.input = self.dir / "study.csv"
        write_csv(self.data, self.input)
        self.tau = "12"

    def tearDown(self):
        self.temp_dir.cleanup()

    def write(self, text: str, name: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path


class TestPseudoCommand(CliTestCase):
    """Test the pseudo subcommand."""

    def test_writes_pseudo_column(self):
        """Output CSV is the input plus pseudo_value, one row per subject."""
        code, out, _ = run(["pseudo", "--input", str(self.input), "--tau", self.tau])
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(StringIO(out))
        self.assertEqual(list(frame.columns), ["id", "arm", "time", "event", "x1", "pseudo_value"])
        self.assertEqual(len(frame), self.data.n)

    def test_curves_export(self):
        """--curves writes one Kaplan-Meier table covering both arms."""
        out_path = self.dir / "pseudo.csv"
        curves = self.dir / "curves.csv"
        code, out, _ = run(["pseudo", "--input", str(self.input), "--tau", self.tau,
                            "--out", str(out_path), "--curves", str(curves)])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out, "")
        self.assertEqual(sorted(pd.read_csv(curves)["arm"].unique()), [0, 1])

    def test_tau_beyond_support(self):
        """tau = 1e9 exits 3 and reports the largest valid tau."""
        code, _, err = run(["pseudo", "--input", str(self.input), "--tau", "1e9"])
        self.assertEqual(code, EXIT_SUPPORT)
        self.assertIn("largest valid tau", err)

    def test_tau_beyond_support_without_censoring(self):
        """A curve that reaches zero still rejects tau = 1e9 with exit 3."""
        path = self.write(
            "id,arm,time,event\n"
            "1,1,2,1\n"
            "2,1,4,1\n"
            "3,1,6,1\n"
            "4,0,1,1\n"
            "5,0,3,1\n"
            "6,0,5,1\n",
            "all_events.csv",
        )
        code, out, err = run(["pseudo", "--input", str(path), "--tau", "1e9"])
        self.assertEqual(code, EXIT_SUPPORT)
        self.assertEqual(out, "")
        self.assertIn("largest valid tau", err)

    def test_input_text_preserved(self):
        """Input cells are written back as read, integers included."""
        path = self.write(
            "id,arm,time,event,age\n"
            "a,1,169,0,34\n"
            "b,1,68,1,41\n"
            "c,1,95,1,29\n"
            "d,0,113,1,50\n"
            "e,0,66,1,38\n"
            "f,0,140,0,45\n",
            "integers.csv",
        )
        code, out, _ = run(["pseudo", "--input", str(path), "--tau", "60"])
        self.assertEqual(code, EXIT_OK)
        lines = out.splitlines()
        self.assertEqual(lines[0], "id,arm,time,event,age,pseudo_value")
        self.assertTrue(lines[1].startswith("a,1,169,0,34,"))
        self.assertTrue(lines[6].startswith("f,0,140,0,45,"))

    def test_missing_input(self):
        """A missing file exits 2."""
        code, _, err = run(["pseudo", "--input", str(self.dir / "absent.csv"), "--tau", "5"])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn("Input error", err)

    def test_non_positive_tau(self):
        """tau <= 0 exits 2."""
        code, _, _ = run(["pseudo", "--input", str(self.input), "--tau", "0"])
        self.assertEqual(code, EXIT_INPUT)


class TestEstimateCommand(CliTestCase):
    """Test the estimate subcommand."""

    def test_report_fields(self):
        """GEE on simulated data prints a complete JSON report."""
        code, out, _ = run(["estimate", "--input", str(self.input), "--tau", self.tau,
                            "--method", "gee"])
        self.assertEqual(code, EXIT_OK)
        report = json.loads(out)
        self.assertEqual(list(report), list(REPORT_FIELDS))
        self.assertEqual(report["n1"] + report["n0"], self.data.n)
        self.assertIn("plugin_difference", report["diagnostics"])

    def test_tmle_with_options(self):
        """Learner, fold and seed flags reach the report settings."""
        out_path = self.dir / "report.json"
        code, _, _ = run(["estimate", "--input", str(self.input), "--tau", self.tau,
                          "--method", "tmle", "--learners", "mean,glm", "--folds", "3",
                          "--seed", "7", "--out", str(out_path)])
        self.assertEqual(code, EXIT_OK)
        settings = json.loads(out_path.read_text())["diagnostics"]["settings"]
        self.assertEqual(settings["outcome_library"], ["mean", "glm"])
        self.assertEqual(settings["folds"], 3)
        self.assertEqual(settings["seed"], 7)

    def test_constant_pseudo_values(self):
        """Every subject past tau: unadjusted estimate 0."""
        path = self.write(
            "id,arm,time,event\n"
            "1,1,20,1\n"
            "2,1,21,1\n"
            "3,0,22,1\n"
            "4,0,23,1\n",
            "late.csv",
        )
        code, out, _ = run(["estimate", "--input", str(path), "--tau", "10", "--method", "unadjusted"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)["estimate"], 0.0)

    def test_estimation_failure(self):
        """A covariate duplicating the arm exits 4 under GEE."""
        path = self.write(
            "id,arm,time,event,dup\n"
            "1,1,5,1,1\n"
            "2,1,6,1,1\n"
            "3,1,8,1,1\n"
            "4,0,4,1,0\n"
            "5,0,7,1,0\n"
            "6,0,9,1,0\n",
            "dup.csv",
        )
        code, _, err = run(["estimate", "--input", str(path), "--tau", "4.5", "--method", "gee"])
        self.assertEqual(code, EXIT_ESTIMATION)
        self.assertIn("rank deficient", err)

    def test_bad_flags(self):
        """Out-of-range flags exit 2."""
        base = ["estimate", "--input", str(self.input), "--tau", self.tau]
        for extra in (["--folds", "1"], ["--folds", "0"], ["--g-bounds", "0.6,0.9"],
                      ["--learners", "forest"], ["--threads", "0"]):
            code, _, _ = run(base + extra)
            self.assertEqual(code, EXIT_INPUT, msg=extra)


class TestSensitivityCommand(CliTestCase):
    """Test the sensitivity cr subcommand."""

    def test_cr_json(self):
        """Output holds both reports, the replaced count and their difference."""
        tentative = self.dir / "tentative.csv"
        code, out, _ = run(["sensitivity", "cr", "--input", str(self.input), "--tau", self.tau,
                            "--method", "aiptw", "--tentative-out", str(tentative)])
        self.assertEqual(code, EXIT_OK)
        payload = json.loads(out)
        self.assertEqual(set(payload), {"main", "cr", "replaced_count", "delta"})
        self.assertAlmostEqual(payload["delta"], payload["cr"]["estimate"] - payload["main"]["estimate"])
        self.assertEqual(payload["cr"]["diagnostics"]["provenance"], "copy_reference")
        frame = pd.read_csv(tentative)
        self.assertEqual(len(frame), payload["replaced_count"] + self.data.n0)


class TestSimulateCommand(CliTestCase):
    """Test the simulate subcommand."""

    def test_byte_identical_outputs(self):
        """Same scenario, n and seed give identical files."""
        first, second = self.dir / "a.csv", self.dir / "b.csv"
        for path in (first, second):
            code, _, _ = run(["simulate", "--scenario", "S0", "--n", "100", "--seed", "1",
                              "--out", str(path)])
            self.assertEqual(code, EXIT_OK)
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_truth_json(self):
        """--truth prints theta_true matching numeric integration within 1e-6."""
        code, out, _ = run(["simulate", "--scenario", "S1", "--truth"])
        self.assertEqual(code, EXIT_OK)
        record = json.loads(out)
        oracle = truth(get_scenario("S1"), numeric=True)
        self.assertAlmostEqual(record["theta_true"], oracle["theta_true"], delta=1e-6)

    def test_unknown_scenario(self):
        """--scenario bogus exits 2."""
        code, _, err = run(["simulate", "--scenario", "bogus", "--n", "10"])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn("bogus", err)

    def test_size_required(self):
        """Writing data needs --n."""
        code, _, _ = run(["simulate", "--scenario", "S0"])
        self.assertEqual(code, EXIT_INPUT)


class TestMain(unittest.TestCase):
    """Test main() dispatch and RunConfig."""

    def test_no_command_prints_help(self):
        """No subcommand shows help and exits 1."""
        code, out, _ = run([])
        self.assertEqual(code, EXIT_UNEXPECTED)
        self.assertIn("rmst-targeted", out)

    def test_unexpected_error(self):
        """Errors outside the library hierarchy exit 1."""
        with patch('bin.cli.main.load_csv', side_effect=RuntimeError("boom")):
            code, _, err = run(["estimate", "--input", "x.csv", "--tau", "5"])
        self.assertEqual(code, EXIT_UNEXPECTED)
        self.assertIn("Unexpected error: boom", err)

    def test_verbose_logs_to_stderr(self):
        """--verbose attaches a standard-error handler."""
        root = logging.getLogger(ROOT_LOGGER)
        before = list(root.handlers)
        level = root.level
        try:
            cli = CLI(verbose=True)
            self.assertTrue(cli.logger.enabled)
            self.assertGreater(len(root.handlers), len(before))
        finally:
            root.handlers = before
            root.setLevel(level)

    def test_parser_defaults(self):
        """Defaults: method tmle, folds 10, seed 0."""
        args = build_parser().parse_args(["estimate", "--input", "d.csv", "--tau", "3"])
        config = RunConfig.from_args(args)
        self.assertEqual((config.method, config.folds, config.seed), ("tmle", 10, 0))
        self.assertEqual(config.g_bounds, (0.025, 0.975))
        self.assertIsNone(config.nuisance_config().outcome_library)

    def test_zero_counts_are_not_defaults(self):
        """--folds 0 and --threads 0 are rejected, not replaced by defaults."""
        for extra in (["--folds", "0"], ["--threads", "0"]):
            args = build_parser().parse_args(["estimate", "--input", "d.csv", "--tau", "3"] + extra)
            with self.assertRaises(DataValidationException, msg=extra):
                RunConfig.from_args(args)

    def test_parse_bounds(self):
        """Bounds parse as two floats."""
        self.assertEqual(parse_bounds("0.05, 0.95"), (0.05, 0.95))
        with self.assertRaises(DataValidationException):
            parse_bounds("0.05")


if __name__ == '__main__':
    unittest.main()
