"""Command-line front end: generation round trips, solving, exit codes."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from lrsdcut.cli import main
from lrsdcut.crf import load_instance


def run_cli(*argv):
    proc = subprocess.run([sys.executable, "-m", "lrsdcut", *argv],
                          capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


class TestGen:
    def test_random_generation_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            out.mkdir()
            code = main(["gen", "--kind", "random", "--n", "8", "--labels",
                         "2", "--seed", "7", str(out / "inst.json")])
            assert code == 0
        assert (a / "inst.json").read_bytes() == (b / "inst.json").read_bytes()
        factor = "random-n8-l2-s7.factor.lrkf"
        assert (a / factor).read_bytes() == (b / factor).read_bytes()

    def test_zero_noise_clusters_recover_planted_labels(self, tmp_path):
        from lrsdcut.oracle import brute_force_map
        out = tmp_path / "clusters.json"
        code = main(["gen", "--kind", "clusters", "--n", "10", "--labels",
                     "2", "--seed", "3", "--noise", "0.0",
                     "--nystrom-landmarks", "10", "--nystrom-rank", "10",
                     str(out)])
        assert code == 0
        problem, instance, _ = load_instance(out)
        labels, _ = brute_force_map(problem)
        np.testing.assert_array_equal(labels, instance["planted_labels"])

    def test_grid_is_loadable_by_all_solvers(self, tmp_path):
        out = tmp_path / "grid.json"
        assert main(["gen", "--kind", "grid", "--grid-w", "20", "--grid-h",
                     "20", "--labels", "2", "--seed", "5", str(out)]) == 0
        problem, instance, _ = load_instance(out)
        assert problem.n_vars == 400
        assert instance["n_vars"] == 400
        assert main(["solve", "--method", "meanfield", "--restarts", "1",
                     str(out)]) == 0


class TestSolve:
    @pytest.fixture
    def instance(self, tmp_path):
        path = tmp_path / "inst.json"
        assert main(["gen", "--kind", "random", "--n", "8", "--labels", "2",
                     "--seed", "11", str(path)]) == 0
        return path

    def test_all_methods_agree_on_instance_hash(self, instance, tmp_path):
        reports = {}
        for method in ("lrsdcut", "meanfield", "brute"):
            out = tmp_path / f"{method}.json"
            code = main(["solve", "--method", method, "--out", str(out),
                         str(instance)])
            assert code == 0
            reports[method] = json.loads(out.read_text())
        hashes = {r["instance_sha256"] for r in reports.values()}
        assert len(hashes) == 1
        assert all("params" in r for r in reports.values())
        # the sandwich also holds across methods on this tiny instance
        assert reports["lrsdcut"]["lower_bound"] <= \
            reports["brute"]["best_energy"] + 1e-9
        assert reports["brute"]["best_energy"] <= \
            reports["lrsdcut"]["best_energy"] + 1e-9
        assert reports["brute"]["best_energy"] <= \
            reports["meanfield"]["best_energy"] + 1e-9

    def test_brute_refuses_oversized_instance(self, tmp_path):
        path = tmp_path / "big.json"
        assert main(["gen", "--kind", "random", "--n", "25", "--labels", "2",
                     "--seed", "1", str(path)]) == 0
        assert main(["solve", "--method", "brute", str(path)]) == 3

    def test_malformed_instance_exits_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        assert main(["solve", "--method", "lrsdcut", str(bad)]) == 2
        assert main(["solve", "--method", "lrsdcut",
                     str(tmp_path / "missing.json")]) == 2

    def test_subprocess_entry_point(self, instance):
        code, stdout, _ = run_cli("solve", "--method", "lrsdcut",
                                  str(instance))
        assert code == 0
        assert "energy=" in stdout and "lower_bound=" in stdout


class TestBench:
    def test_single_instance_single_row(self, tmp_path):
        inst = tmp_path / "one.json"
        assert main(["gen", "--kind", "random", "--n", "30", "--labels", "2",
                     "--seed", "2", str(inst)]) == 0
        out = tmp_path / "bench.csv"
        assert main(["bench", "--kmax", "3", "--out", str(out),
                     str(inst)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 1
        assert rows[0]["ratio"] == ""

    def test_two_sizes_get_ratio_column(self, tmp_path):
        small = tmp_path / "small.json"
        large = tmp_path / "large.json"
        assert main(["gen", "--kind", "grid", "--grid-w", "10", "--grid-h",
                     "10", "--labels", "2", "--seed", "3", str(small)]) == 0
        assert main(["gen", "--kind", "grid", "--grid-w", "20", "--grid-h",
                     "10", "--labels", "2", "--seed", "3", str(large)]) == 0
        out = tmp_path / "bench.csv"
        assert main(["bench", "--kmax", "3", "--out", str(out), str(small),
                     str(large)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2
        assert float(rows[1]["ratio"]) > 0


class TestCompare:
    def test_table_and_csv(self, tmp_path, capsys):
        paths = []
        for seed in range(3):
            path = tmp_path / f"inst{seed}.json"
            assert main(["gen", "--kind", "clusters", "--n", "40", "--labels",
                         "2", "--seed", str(seed), "--nystrom-landmarks",
                         "20", "--nystrom-rank", "15", str(path)]) == 0
            paths.append(str(path))
        out = tmp_path / "compare.csv"
        assert main(["compare", "--restarts", "2", "--out", str(out),
                     *paths]) == 0
        stdout = capsys.readouterr().out
        assert "median lrsdcut=" in stdout
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 3
        assert all(float(r["lrsdcut_energy"]) <= float(r["meanfield_energy"])
                   + 1e-6 for r in rows)


class TestThreadCap:
    def test_env_var_sets_blas_limits(self, instance_env=None):
        code, stdout, _ = subprocess_run_with_env()
        assert code == 0
        assert stdout.strip() == "1"


def subprocess_run_with_env():
    import os
    env = dict(os.environ, LRSDCUT_THREADS="1")
    env.pop("OMP_NUM_THREADS", None)
    probe = ("from lrsdcut.cli import _apply_thread_cap; _apply_thread_cap();"
             "import os; print(os.environ['OMP_NUM_THREADS'])")
    proc = subprocess.run([sys.executable, "-c", probe], env=env,
                          capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr
