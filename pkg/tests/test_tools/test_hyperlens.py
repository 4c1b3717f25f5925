import unittest
import io
import json
import shutil
import tempfile
import sys
import os
from unittest.mock import patch

import numpy as np

# Add the src directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.data.bundle import MANIFEST_NAME, STORAGE_DTYPE, masks_filename, planted_filename, slots_filename
from src.tools.hyperlens import (
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    main,
    parse_arguments,
    parse_norm_profile,
    parse_pairs,
)


def run(argv):
    """Run the CLI and capture standard output."""
    with patch('sys.stdout', new_callable=io.StringIO) as stdout:
        code = main(argv)
    return code, stdout.getvalue()


class TestHyperlensCli(unittest.TestCase):
    def setUp(self):
        """Set up a temporary directory holding a small generated bundle."""
        self.tmpdir = tempfile.mkdtemp()
        self.bundle = os.path.join(self.tmpdir, "bundle")
        code, out = run(["gen", "--scenes", "3", "--dim", "8", "--patches", "64", "--seed", "1",
                         "-o", self.bundle, "--quiet"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Generated 3 scenes (seed=1)", out)

    def tearDown(self):
        """Remove the temporary directory."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.tmpdir, name)

    def test_analyze_writes_every_block(self):
        """Test that a full analyze run reports all five analyses and a tradeoff."""
        report_path = self.path("report.json")

        code, out = run(["analyze", self.bundle, "--all", "-o", report_path, "--seed", "5"])

        self.assertEqual(code, EXIT_OK)
        self.assertIn("=== HYPERLENS SUMMARY ===", out)
        with open(report_path, "r", encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(sorted(report["analyses"]), ["agreement", "hyperbolicity", "norms", "retrieve", "separate"])
        self.assertEqual(len(report["analyses"]["retrieve"]), 16)
        self.assertEqual(report["seed"], 5)
        self.assertEqual(report["config"]["pairs"], [[3, 5], [5, 7], [7, 11], [11, 13]])
        self.assertIsNotNone(report["tradeoff"])
        self.assertEqual(report["errors"], {})

    def test_only_selects_blocks(self):
        report_path = self.path("only.json")

        code, out = run(["analyze", self.bundle, "--only", "retrieve", "--manifolds", "euclidean",
                         "-o", report_path, "--quiet"])

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out, "")
        with open(report_path, "r", encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(list(report["analyses"]), ["retrieve"])
        self.assertEqual(len(report["analyses"]["retrieve"]), 4)
        self.assertIsNone(report["tradeoff"])

    def test_worker_count_does_not_change_reports(self):
        """Test that reports are byte-identical for 1 and 8 workers."""
        outputs = []
        for workers in ("1", "8"):
            report_path = self.path(f"report_{workers}.json")
            tables = self.path(f"tables_{workers}")
            code, _ = run(["analyze", self.bundle, "--workers", workers, "-o", report_path,
                           "--tabular", tables, "--quiet"])
            self.assertEqual(code, EXIT_OK)
            with open(report_path, "rb") as f:
                content = [f.read()]
            for name in sorted(os.listdir(tables)):
                with open(os.path.join(tables, name), "rb") as f:
                    content.append(f.read())
            outputs.append(content)

        self.assertEqual(outputs[0], outputs[1])

    def test_failed_analysis_is_reported_not_fatal(self):
        single = self.path("single")
        run(["gen", "--scenes", "1", "--dim", "8", "--patches", "64", "-o", single, "--quiet"])
        report_path = self.path("single.json")

        code, _ = run(["analyze", single, "--only", "separate,norms", "-o", report_path, "--quiet"])

        self.assertEqual(code, EXIT_OK)
        with open(report_path, "r", encoding="utf-8") as f:
            report = json.load(f)
        self.assertIsNone(report["analyses"]["separate"])
        self.assertIn("separate", report["errors"])
        self.assertEqual(len(report["analyses"]["norms"]), 4)

    def test_tight_planted_bundle_is_retrieved_by_every_geometry(self):
        """Test that default generator settings with child noise 0.01 give Hit@1 >= 99% everywhere."""
        planted = self.path("planted")
        code, _ = run(["gen", "--scenes", "20", "--seed", "42", "--child-noise", "0.01", "-o", planted, "--quiet"])
        self.assertEqual(code, EXIT_OK)
        report_path = self.path("planted.json")

        # Call the method
        code, _ = run(["analyze", planted, "--only", "retrieve,agreement", "-o", report_path, "--quiet"])

        self.assertEqual(code, EXIT_OK)
        with open(report_path, "r", encoding="utf-8") as f:
            report = json.load(f)
        retrieval = report["analyses"]["retrieve"]
        self.assertEqual(len(retrieval), 16)
        for entry in retrieval:
            self.assertGreater(entry["n_evaluated"], 0)
            self.assertGreaterEqual(entry["hit_at_1"], 99.0, f"{entry['manifold']} {entry['level_pair']}")

        # Check that every geometry agrees with the mask parents
        agreement = report["analyses"]["agreement"]
        gt = agreement["labels"].index("gt")
        for i, label in enumerate(agreement["labels"]):
            self.assertGreaterEqual(agreement["entries"][i][gt], 0.99, label)

    def test_usage_errors(self):
        self.assertEqual(run(["analyze", self.bundle, "--manifolds", "lorentz:-1", "--quiet"])[0], EXIT_USAGE)
        self.assertEqual(run(["analyze", self.bundle, "--only", "everything", "--quiet"])[0], EXIT_USAGE)
        self.assertEqual(run(["analyze", self.bundle, "--tau-excl", "0", "--quiet"])[0], EXIT_USAGE)
        self.assertEqual(run(["gen", "--patches", "7", "-o", self.path("bad"), "--quiet"])[0], EXIT_USAGE)
        self.assertEqual(run(["gen", "--norm-profile", "steep", "-o", self.path("bad"), "--quiet"])[0], EXIT_USAGE)

    @patch('sys.stderr', new_callable=io.StringIO)
    def test_argparse_errors_exit_with_usage_code(self, mock_stderr):
        with self.assertRaises(SystemExit) as ctx:
            main(["analyze", self.bundle, "--all", "--only", "norms"])
        self.assertEqual(ctx.exception.code, EXIT_USAGE)

    def test_missing_bundle(self):
        self.assertEqual(run(["analyze", self.path("nowhere"), "--quiet"])[0], EXIT_IO)
        self.assertEqual(run(["validate", self.path("nowhere")])[0], EXIT_IO)

    def test_validate_clean_bundle(self):
        code, out = run(["validate", self.bundle])

        self.assertEqual(code, EXIT_OK)
        self.assertIn("scene_00002", out)
        self.assertIn("all scenes OK", out)

    def test_validate_truncated_blob(self):
        with open(os.path.join(self.bundle, slots_filename("scene_00001", 7)), "r+b") as f:
            f.truncate(20)

        code, out = run(["validate", self.bundle])

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertIn("scene_00001", out)
        self.assertIn("FAIL", out)

    def test_corrupt_planted_file_is_a_validation_failure(self):
        with open(os.path.join(self.bundle, planted_filename("scene_00002")), "w", encoding="utf-8") as f:
            f.write("{not json")

        code, out = run(["validate", self.bundle, "--quiet"])

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertIn("[planted] scene=scene_00002", out)
        self.assertEqual(run(["analyze", self.bundle, "--only", "norms", "-o", self.path("r.json"), "--quiet"])[0],
                         EXIT_IO)

    def test_mistyped_manifest_field(self):
        manifest_path = os.path.join(self.bundle, MANIFEST_NAME)
        with open(manifest_path, "r", encoding="utf-8") as f:
            data = json.load(f)
        data["d_s"] = "abc"
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(data, f)

        code, out = run(["validate", self.bundle])

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertIn("d_s must be a positive integer", out)
        self.assertEqual(run(["analyze", self.bundle, "-o", self.path("r.json"), "--quiet"])[0], EXIT_IO)

    def test_validate_mask_out_of_range(self):
        masks = np.full((5, 64), 0.2)
        masks[3, 10] = 1.5
        with open(os.path.join(self.bundle, masks_filename("scene_00000", 5)), "wb") as f:
            f.write(masks.astype(STORAGE_DTYPE).tobytes())

        code, out = run(["validate", self.bundle, "--quiet"])

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertIn("level=5 slot=3 patch=10", out)
        # Loading the same bundle for analysis fails on input
        self.assertEqual(run(["analyze", self.bundle, "--quiet", "-o", self.path("r.json")])[0], EXIT_IO)


class TestArgumentParsing(unittest.TestCase):
    @patch.dict(os.environ, {"HYPERLENS_WORKERS": "3"})
    def test_workers_default_from_environment(self):
        args = parse_arguments(["analyze", "bundle"])
        self.assertEqual(args.workers, 3)

    def test_defaults(self):
        args = parse_arguments(["analyze", "bundle"])
        self.assertEqual(args.output, "report.json")
        self.assertEqual(args.policy, "argmax")
        self.assertFalse(args.delta_per_level)
        self.assertEqual(args.manifolds, "euclidean,lorentz:0.2,lorentz:0.5,lorentz:1")

    def test_list_parsers(self):
        self.assertEqual(parse_norm_profile("3:1.446,13:1.137"), {3: 1.446, 13: 1.137})
        self.assertEqual(parse_norm_profile("decreasing"), "decreasing")
        self.assertIsNone(parse_norm_profile(None))
        self.assertEqual(parse_pairs("3-5,5-7"), [(3, 5), (5, 7)])


if __name__ == '__main__':
    unittest.main()
