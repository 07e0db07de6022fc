"""End-to-end checks of the covclt command line.

Needs COVCLT_BIN (path to the binary) and COVCLT_SCHEMAS (schema directory)
in the environment; ctest sets both.
"""

import csv
import json
import math
import os
import pathlib
import subprocess
import tempfile
import time
import unittest

import jsonschema
import referencing

BIN = os.environ.get("COVCLT_BIN", "covclt")
SCHEMAS = pathlib.Path(os.environ.get("COVCLT_SCHEMAS", "schemas"))


def registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        schema = json.loads(path.read_text())
        resources.append((schema["$id"], referencing.Resource.from_contents(schema)))
    return referencing.Registry().with_resources(resources)


def validate(instance, name):
    schema = json.loads((SCHEMAS / name).read_text())
    jsonschema.Draft202012Validator(schema, registry=registry()).validate(instance)


def run(*args, check=True):
    proc = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} exited {proc.returncode}\n{proc.stderr}")
    return proc


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = pathlib.Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_usage_errors(self):
        self.assertEqual(run("deteq", "--grid", "0:4:0", "--out", self.tmp, check=False).returncode, 2)
        self.assertEqual(run("deteq", "--grid", "nonsense", "--out", self.tmp, check=False).returncode, 2)
        self.assertEqual(run("predict", "--population", "banana", "--out", self.tmp, check=False).returncode, 2)
        self.assertEqual(run("frobnicate", check=False).returncode, 2)

    def test_deteq_white_density(self):
        run("deteq", "--population", "identity", "--N", 200, "--c", 1, "--grid", "0:4:2048", "--out", self.tmp)
        rows = read_csv(self.tmp / "density.csv")
        self.assertEqual(len(rows), 2048)
        worst = 0.0
        for r in rows:
            x = float(r["x"])
            if 0.05 < x < 3.95:
                exact = math.sqrt(x * (4.0 - x)) / (2.0 * math.pi * x)
                worst = max(worst, abs(float(r["density"]) - exact))
        self.assertLess(worst, 1e-8)
        support = read_csv(self.tmp / "support.csv")
        self.assertEqual(len(support), 1)
        self.assertAlmostEqual(float(support[0]["hi"]), 4.0, delta=5e-3)
        with open(self.tmp / "density.csv", "rb") as fh:
            self.assertTrue(fh.readline().endswith(b"\r\n"))

    def test_deteq_model_file_bulks(self):
        model = {"eigenvalues": [1.0, 2.0] * 50, "n": 2000}
        validate(model, "model.schema.json")
        path = self.tmp / "spec.json"
        path.write_text(json.dumps(model))
        # Far apart relative to the spread at small c: two bulks.
        run("deteq", "--population", f"file:{path}", "--grid", "0.2:3.5:1200", "--out", self.tmp / "a")
        self.assertEqual(len(read_csv(self.tmp / "a" / "support.csv")), 2)
        model["n"] = 100
        path.write_text(json.dumps(model))
        run("deteq", "--population", f"file:{path}", "--grid", "0.01:8:1600", "--out", self.tmp / "b")
        self.assertEqual(len(read_csv(self.tmp / "b" / "support.csv")), 1)

    def test_predict_complex_gaussian_has_zero_bias(self):
        out = self.tmp / "p"
        run("predict", "--population", "identity", "--N", 100, "--n", 200, "--dist", "complex_gaussian",
            "--f", "bump(0.2,3)", "--z", "1,0.5", "--out", out)
        law = json.loads((out / "law.json").read_text())
        validate(law, "law.schema.json")
        self.assertEqual(law["mean"]["bump(0.2,3)"], 0.0)

    def test_predict_covariance_is_psd(self):
        out = self.tmp / "p"
        fs = ["bump(0.2,3)", "bump(0.5,4.5)", "smooth_bump(0.1,3.5)"]
        args = ["predict", "--population", "identity", "--N", 100, "--n", 200, "--dist", "real_gaussian"]
        for f in fs:
            args += ["--f", f]
        run(*args, "--out", out)
        law = json.loads((out / "law.json").read_text())
        validate(law, "law.schema.json")
        cov = law["covariance_matrix"]
        self.assertEqual((len(cov), len(cov[0])), (3, 3))
        for i in range(3):
            for j in range(3):
                self.assertAlmostEqual(cov[i][j], cov[j][i], delta=1e-9 * abs(cov[i][i]))
        # Sylvester's criterion on the leading minors.
        m1 = cov[0][0]
        m2 = cov[0][0] * cov[1][1] - cov[0][1] ** 2
        m3 = (cov[0][0] * (cov[1][1] * cov[2][2] - cov[1][2] * cov[2][1])
              - cov[0][1] * (cov[1][0] * cov[2][2] - cov[1][2] * cov[2][0])
              + cov[0][2] * (cov[1][0] * cov[2][1] - cov[1][1] * cov[2][0]))
        self.assertGreater(m1, 0.0)
        self.assertGreater(m2, 0.0)
        self.assertGreater(m3, -1e-12 * m1 ** 3)

    def test_predict_variance_is_linear_in_kappa(self):
        variances = {}
        for kappa in (0.0, 1.0, -2.0):
            out = self.tmp / f"k{kappa}"
            run("predict", "--population", "two_atom(1,3,0.5)", "--N", 100, "--n", 200, "--V", 1,
                "--kappa", kappa, "--f", "bump(0.2,6)", "--z", "1,0.5", "--out", out)
            variances[kappa] = json.loads((out / "law.json").read_text())["variance"]["bump(0.2,6)"]
        cumulant_part = variances[1.0] - variances[0.0]
        self.assertNotEqual(cumulant_part, 0.0)
        self.assertAlmostEqual(variances[-2.0] - variances[0.0], -2.0 * cumulant_part,
                               delta=1e-8 * abs(variances[0.0]))

    def test_simulate_smoke_and_rerun(self):
        out = self.tmp / "s"
        args = ("simulate", "--population", "identity", "--N", 50, "--n", 50, "--replicates", 10,
                "--dist", "real_rademacher", "--f", "bump(0.5,4.5)", "--z", "1,0.5", "--seed", 7,
                "--threads", 2, "--out", out)
        start = time.monotonic()
        run(*args)
        elapsed = time.monotonic() - start
        self.assertLess(elapsed, 5.0)
        first = (out / "summary.json").read_bytes()
        summary = json.loads(first)
        validate(summary, "summary.schema.json")
        self.assertEqual(summary["replicates"], 10)
        self.assertEqual(len(summary["statistics"]), 3)
        replicates = (out / "replicates.csv").read_bytes()
        run(*args)
        self.assertEqual((out / "summary.json").read_bytes(), first)
        self.assertEqual((out / "replicates.csv").read_bytes(), replicates)

    def test_print_config_round_trips(self):
        cfg = {"population": "two_atom(1,3,0.25)", "N": 80, "c": 0.5, "distribution": "real_uniform",
               "functions": ["bump(1,5)"], "z": [[1.0, 0.5]], "replicates": 20, "seed": 3}
        validate(cfg, "config.schema.json")
        path = self.tmp / "cfg.json"
        path.write_text(json.dumps(cfg))
        printed = json.loads(run("simulate", "--config", path, "--print-config").stdout)
        validate(printed, "config.schema.json")
        self.assertEqual(printed["n"], 160)
        path.write_text(json.dumps(printed))
        again = json.loads(run("simulate", "--config", path, "--print-config").stdout)
        self.assertEqual(again, printed)

    def test_check_suite_passes(self):
        proc = run("check", "--N", 60, "--n", 90)
        lines = [line for line in proc.stdout.splitlines() if line]
        self.assertTrue(lines)
        self.assertTrue(all(line.startswith("PASS") for line in lines), proc.stdout)


if __name__ == "__main__":
    unittest.main()
