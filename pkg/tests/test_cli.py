import hashlib
import io
import json
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kequiv.cli import run_cli
from kequiv.csvio import DataError, read_samples, write_samples
from kequiv.models import GaussianModel, gaussian_sample

REPORT_FIELDS = {
    "test_name", "statistic", "critical_value", "reject", "discrepancy_estimate", "variance_estimate",
    "n", "m", "alpha", "theta", "B", "seed", "degenerate_variance", "algorithm",
}


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def files(tmp_path):
    model = tmp_path / "model.json"
    model.write_text(json.dumps(GaussianModel([0.0, 0.0]).to_dict()))
    x = tmp_path / "x.csv"
    y = tmp_path / "y.csv"
    write_samples(x, gaussian_sample(GaussianModel([0.0, 0.0]), 40, 1), header=["a", "b"])
    write_samples(y, gaussian_sample(GaussianModel([0.2, 0.0]), 30, 2))
    return {"model": model, "x": x, "y": y, "dir": tmp_path}


class TestCsv:
    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=8),
                      elements=st.floats(allow_nan=False, allow_infinity=False)))
    def test_roundtrip(self, tmp_path_factory, X):
        path = tmp_path_factory.mktemp("rt") / "s.csv"
        write_samples(path, X)
        assert read_samples(path).tobytes() == X.tobytes()

    def test_header_detection(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("x,y\n1,2\n\n3,4\n")
        np.testing.assert_array_equal(read_samples(path), [[1, 2], [3, 4]])

    @pytest.mark.parametrize(
        "text, row, column",
        [("1,2\n3\n", 2, None), ("1,2\n3,abc\n", 2, 2), ("a,b\n1,2\n4,nan\n", 3, 2), ("", None, None)],
    )
    def test_diagnostics(self, tmp_path, text, row, column):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(DataError) as info:
            read_samples(path)
        assert info.value.row == row and info.value.column == column


class TestKsdCommand:
    def test_theta_dominates(self, files):
        code, out, err = run("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 10,
                             "--alpha", 0.05, "--variant", "boot", "--B", 100, "--seed", 7)
        assert code == 0
        report = json.loads(out)
        assert report["reject"] is True
        assert set(report) == REPORT_FIELDS
        assert report["algorithm"] == 2 and report["seed"] == 7
        assert "kernel" in err

    def test_byte_identical(self, files):
        argv = ("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 0.3,
                "--alpha", 0.05, "--variant", "boot", "--B", 80, "--seed", 11)
        assert run(*argv)[1] == run(*argv)[1]

    def test_normal_variant_csv(self, files):
        code, out, _ = run("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 0.5,
                           "--alpha", 0.05, "--variant", "normal", "--format", "csv")
        assert code == 0
        header, values = out.strip().split("\n")
        assert set(header.split(",")) == REPORT_FIELDS
        assert "EKsdNormal" in values

    def test_omitted_seed_is_printed(self, files):
        code, out, err = run("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 0.3,
                             "--alpha", 0.05, "--variant", "boot", "--B", 30)
        assert code == 0
        seed = int(re.search(r"using seed (\d+)", err).group(1))
        assert json.loads(out)["seed"] == seed
        again = run("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 0.3,
                    "--alpha", 0.05, "--variant", "boot", "--B", 30, "--seed", seed)[1]
        assert again == out

    def test_out_file(self, files):
        target = files["dir"] / "report.json"
        code, out, _ = run("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 0.5,
                           "--alpha", 0.05, "--variant", "normal", "--out", target)
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["test_name"] == "EKsdNormal"

    def test_dimension_mismatch_is_data_error(self, files):
        model = files["dir"] / "m1.json"
        model.write_text(json.dumps(GaussianModel([0.0]).to_dict()))
        code, _, err = run("ksd-test", "--model", model, "--data", files["x"], "--theta", 0.5,
                           "--alpha", 0.05, "--variant", "normal")
        assert code == 3 and "dimension" in err


class TestMmdCommand:
    def test_identical_files(self, files):
        code, out, _ = run("mmd-test", "--data-x", files["x"], "--data-y", files["x"], "--theta", 0.05,
                           "--alpha", 0.05, "--variant", "boot", "--B", 100, "--seed", 3)
        assert code == 0
        report = json.loads(out)
        assert report["statistic"] == 0.05
        assert report["reject"] == (report["statistic"] > report["critical_value"])

    def test_normal(self, files):
        code, out, _ = run("mmd-test", "--data-x", files["x"], "--data-y", files["y"], "--theta", 0.5,
                           "--alpha", 0.05, "--variant", "normal", "--bandwidth-sq", 1.0)
        assert code == 0
        report = json.loads(out)
        assert report["n"] == 40 and report["m"] == 30 and report["algorithm"] == 3


class TestOtherCommands:
    def test_margin(self, files):
        code, out, _ = run("margin", "--kind", "mmd", "--data-x", files["x"], "--data-y", files["y"],
                           "--theta-prime", 0.1, "--beta", 0.2, "--alpha", 0.05, "--B", 50, "--seed", 1)
        assert code == 0
        doc = json.loads(out)
        assert doc["theta"] > 0.1 and doc["seed"] == 1

    def test_margin_requires_inputs(self, files):
        code, _, _ = run("margin", "--kind", "ksd", "--theta-prime", 0, "--beta", 0.2, "--alpha", 0.05)
        assert code == 2

    def test_experiment(self, files):
        plan = files["dir"] / "plan.json"
        plan.write_text(json.dumps({
            "scenario": "GaussMeanShiftBySampleSize", "sweep": [20], "repetitions": 2,
            "config": {"B": 20, "seed": 1, "theta": 0.3},
            "params": {"ksd_bandwidth_sq": 1.0, "mmd_bandwidth_sq": 1.0},
        }))
        code, out, _ = run("experiment", "--plan", plan, "--format", "csv", "--threads", 2)
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0].startswith("parameter,test,proportion,ci_halfwidth,theta,theta_provenance,repetitions")
        assert len(lines) == 5
        code1, out1, _ = run("experiment", "--plan", plan, "--format", "csv", "--threads", 1)
        assert out1 == out

    def test_bad_plan(self, files):
        plan = files["dir"] / "plan.json"
        plan.write_text("{not json")
        assert run("experiment", "--plan", plan)[0] == 3
        plan.write_text(json.dumps({"scenario": "Nope", "sweep": [1]}))
        assert run("experiment", "--plan", plan)[0] == 2

    def test_oracle(self, files):
        p = files["dir"] / "p.json"
        p.write_text(json.dumps(GaussianModel([0.3]).to_dict()))
        q = files["dir"] / "q.json"
        q.write_text(json.dumps(GaussianModel([0.0]).to_dict()))
        code, out, _ = run("oracle", "--kind", "ksd", "--model", p, "--sample-from", q, "--mc-size", 10000,
                           "--seed", 2, "--bandwidth-sq", 1.0)
        assert code == 0
        doc = json.loads(out)
        assert doc["mc_size"] == 10000 and 0.15 < doc["value"] < 0.35
        assert run("oracle", "--kind", "ksd", "--model", p, "--sample-from", q, "--mc-size", 10, "--seed", 2)[0] == 2


class TestExitCodes:
    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["frobnicate"],
            ["ksd-test", "--data", "x.csv"],
            ["mmd-test", "--data-x", "a", "--data-y", "b", "--theta", 1, "--alpha", 1.5, "--variant", "boot"],
            ["mmd-test", "--data-x", "a", "--data-y", "b", "--theta", -1, "--alpha", 0.05, "--variant", "boot"],
            ["mmd-test", "--data-x", "a", "--data-y", "b", "--theta", 1, "--alpha", 0.05, "--variant", "boot", "--B", 0],
            ["mmd-test", "--data-x", "a", "--data-y", "b", "--theta", 1, "--alpha", 0.05, "--variant", "x"],
            ["mmd-test", "--data-x", "a", "--data-y", "b", "--theta", 1, "--alpha", 0.05, "--variant", "boot", "--bogus"],
        ],
    )
    def test_usage(self, argv):
        assert run(*argv)[0] == 2

    def test_validation_happens_before_reading(self, tmp_path):
        # missing files would be a data error; the bad alpha must win
        code, _, _ = run("mmd-test", "--data-x", tmp_path / "none.csv", "--data-y", tmp_path / "none.csv",
                         "--theta", 1, "--alpha", 0, "--variant", "boot")
        assert code == 2

    def test_malformed_csv(self, files):
        bad = files["dir"] / "bad.csv"
        bad.write_text("1,2\n3,oops\n")
        code, _, err = run("mmd-test", "--data-x", bad, "--data-y", files["y"], "--theta", 1,
                           "--alpha", 0.05, "--variant", "normal")
        assert code == 3
        assert "row 2" in err and "column 2" in err

    def test_missing_file(self, files):
        code, _, _ = run("ksd-test", "--model", files["dir"] / "nope.json", "--data", files["x"], "--theta", 1,
                         "--alpha", 0.05, "--variant", "normal")
        assert code == 3

    def test_help(self):
        assert run("--help")[0] == 0


def test_inputs_not_mutated(files):
    digest = {k: hashlib.sha256(files[k].read_bytes()).hexdigest() for k in ("model", "x", "y")}
    run("ksd-test", "--model", files["model"], "--data", files["x"], "--theta", 0.4, "--alpha", 0.05,
        "--variant", "boot", "--B", 20, "--seed", 1)
    run("mmd-test", "--data-x", files["x"], "--data-y", files["y"], "--theta", 0.4, "--alpha", 0.05,
        "--variant", "boot", "--B", 20, "--seed", 1)
    assert digest == {k: hashlib.sha256(files[k].read_bytes()).hexdigest() for k in ("model", "x", "y")}
