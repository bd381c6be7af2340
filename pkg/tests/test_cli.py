import io
import json
import os
import subprocess
import sys
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

import main
from utils import file_sha256

REPO_ROOT = Path(__file__).resolve().parents[1]


def _run(argv):
    buffer = io.StringIO()
    with patch.object(main, "configure_logging"), redirect_stdout(buffer):
        code = main.main(argv)
    return code, buffer.getvalue()


def _write_config(root: Path, name: str, **fields) -> Path:
    payload = {"schema_version": 1, "n": 1, "d": 2, "lambdas": [1.0], "horizon": 10,
               "loss": "linear"}
    payload.update(fields)
    path = root / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class GraphStatsCommandTests(unittest.TestCase):
    def test_named_families(self):
        cases = [
            (["--complete", "5"], "alpha=1 gamma=1 alpha2=1 (exact)", "regular=yes, degree 4"),
            (["--path", "4"], "alpha=2 gamma=2 alpha2=2 (exact)", "regular=no"),
            (["--cycle", "5"], "alpha=2 gamma=2 alpha2=1 (exact)", "regular=yes, degree 2"),
        ]
        for flags, invariants, regularity in cases:
            with self.subTest(flags=flags):
                code, output = _run(["graph-stats", *flags])

                self.assertEqual(code, main.EXIT_OK)
                self.assertIn(invariants, output)
                self.assertIn(regularity, output)

    def test_large_random_graph_is_approximate(self):
        code, output = _run(["graph-stats", "--er", "30", "0.9", "--seed", "1"])

        self.assertEqual(code, main.EXIT_OK)
        self.assertIn("n=30", output)
        self.assertIn("(approximate)", output)

    def test_exact_request_above_the_limit_fails(self):
        code, output = _run(["graph-stats", "--er", "30", "0.9", "--exact"])

        self.assertEqual(code, main.EXIT_RUNTIME)
        self.assertIn("❌ Error:", output)

    def test_edge_list_errors_name_the_line(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "graph.txt"
            path.write_text("n=3\n0 1\n1 7\n", encoding="utf-8")

            code, output = _run(["graph-stats", "--edge-list", str(path)])

        self.assertEqual(code, main.EXIT_CONFIG)
        self.assertIn("line 3", output)

    def test_usage_errors(self):
        with redirect_stdout(io.StringIO()), patch("sys.stderr", new_callable=io.StringIO):
            self.assertEqual(main.main(["no-such-command"]), main.EXIT_CONFIG)
            self.assertEqual(main.main(["--help"]), main.EXIT_OK)


class ExperimentCommandTests(unittest.TestCase):
    def test_simulation_writes_trajectory_and_manifest(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            config = _write_config(root, "tiny.json")

            code, _ = _run(["simulate", str(config), "--output", str(root / "out")])
            lines = (root / "out" / "trajectory.csv").read_text(encoding="utf-8").splitlines()
            manifest = json.loads((root / "out" / "manifest.json").read_text(encoding="utf-8"))

        self.assertEqual(code, main.EXIT_OK)
        self.assertEqual(lines[0], "t,active,loss,cum_multitask_regret")
        self.assertEqual(len(lines), 11)
        self.assertEqual(manifest["command"], "simulate")
        self.assertEqual(sorted(entry["path"] for entry in manifest["outputs"]),
                         ["summary.json", "trajectory.csv"])

    def test_repeated_runs_are_byte_identical(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            config = _write_config(root, "tiny.json", n=3, horizon=40)

            _run(["simulate", str(config), "--output", str(root / "a")])
            _run(["simulate", str(config), "--output", str(root / "b")])
            hashes = [file_sha256(root / run / "trajectory.csv") for run in ("a", "b")]

        self.assertEqual(hashes[0], hashes[1])

    def test_seed_override_changes_the_run(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            config = _write_config(root, "tiny.json", n=3, horizon=40)

            _run(["simulate", str(config), "--output", str(root / "a")])
            _run(["simulate", str(config), "--seed", "5", "--output", str(root / "b")])
            manifest = json.loads((root / "b" / "manifest.json").read_text(encoding="utf-8"))
            hashes = [file_sha256(root / run / "trajectory.csv") for run in ("a", "b")]

        self.assertEqual(manifest["master_seed"], 5)
        self.assertNotEqual(hashes[0], hashes[1])

    def test_private_quadratic_config_is_refused(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            config = _write_config(root, "bad.json", algorithm="dope", loss="quadratic")

            code, output = _run(["simulate", str(config), "--output", str(root / "out")])

            self.assertFalse((root / "out").exists())

        self.assertEqual(code, main.EXIT_CONFIG)
        self.assertIn("linear", output)

    def test_schema_violations_are_configuration_errors(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            config = _write_config(root, "bad.json", horizon=0)

            code, output = _run(["simulate", str(config), "--output", str(root / "out")])

        self.assertEqual(code, main.EXIT_CONFIG)
        self.assertIn("horizon", output)

    def test_verify_manifest_detects_tampering(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            config = _write_config(root, "tiny.json")
            _run(["simulate", str(config), "--output", str(root / "out")])
            manifest = root / "out" / "manifest.json"

            clean, _ = _run(["verify-manifest", str(manifest)])
            with (root / "out" / "trajectory.csv").open("a", encoding="utf-8") as handle:
                handle.write("tampered\n")
            with self.assertLogs("experiments.manifest", level="WARNING"):
                tampered, output = _run(["verify-manifest", str(manifest)])

        self.assertEqual(clean, main.EXIT_OK)
        self.assertEqual(tampered, main.EXIT_RUNTIME)
        self.assertIn("trajectory.csv: hash mismatch", output)


class ProcessTests(unittest.TestCase):
    def test_module_entry_point_exit_code(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            env = dict(os.environ, MTCOOL_OUTPUT_ROOT=temp_dir)
            result = subprocess.run(
                [sys.executable, "main.py", "graph-stats", "--path", "4"],
                cwd=REPO_ROOT, env=env, capture_output=True, text=True, check=False)

        self.assertEqual(result.returncode, 0)
        self.assertIn("alpha=2 gamma=2 alpha2=2 (exact)", result.stdout)


if __name__ == "__main__":
    unittest.main()
