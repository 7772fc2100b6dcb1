"""Protocol conformance at the subprocess level: the same handshake, batch,
and error behaviours the explanation engine's bridge expects."""

import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import censored_sample, write_csv


@pytest.fixture(scope="module")
def csv_path(tmp_path_factory):
    X, time, event = censored_sample(n=150, m=4, seed=9, weights=(1.0, -0.7, 0.0, 0.0))
    return write_csv(tmp_path_factory.mktemp("data") / "synth.csv", X, time, event)


def server_argv(csv_path, top_k=2, n_trees=10, seed=0):
    return [
        sys.executable, "-m", "pymodel_server.server",
        "--dataset", f"csv:{csv_path}",
        "--top-k", str(top_k), "--n-trees", str(n_trees), "--seed", str(seed),
    ]


class ServerProc:
    def __init__(self, argv):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True, bufsize=1,
        )

    def ask(self, payload: str) -> dict:
        self.proc.stdin.write(payload + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        assert line, f"server closed early; stderr: {self.proc.stderr.read()}"
        return json.loads(line)

    def close(self) -> int:
        self.proc.stdin.close()
        self.proc.wait(timeout=30)
        self.proc.stdout.close()
        self.proc.stderr.close()
        return self.proc.returncode


@pytest.fixture
def server(csv_path):
    s = ServerProc(server_argv(csv_path))
    yield s
    s.close()


def test_info_handshake(server):
    info = server.ask(json.dumps({"op": "info"}))
    assert info["name"] == "rsf-synth"
    assert info["n_features"] == 2
    assert len(info["features"]) == 2
    assert info["n_rows"] == 150


def test_predict_preserves_row_order(server):
    info = server.ask(json.dumps({"op": "info"}))
    k = info["n_features"]
    batch = [[float(i)] * k for i in range(5)]
    out = server.ask(json.dumps({"op": "predict", "x": batch}))
    assert len(out["y"]) == 5
    assert all(np.isfinite(v) and v > 0 for v in out["y"])
    # a repeated batch answers identically, in order
    again = server.ask(json.dumps({"op": "predict", "x": batch}))
    assert again["y"] == out["y"]


def test_empty_batch_and_bad_shapes(server):
    assert server.ask(json.dumps({"op": "predict", "x": []})) == {"y": []}
    assert "error" in server.ask(json.dumps({"op": "predict", "x": [[1.0]]}))
    assert "error" in server.ask(json.dumps({"op": "predict", "x": "nope"}))
    assert "error" in server.ask(json.dumps({"op": "predict"}))


def test_unknown_op_and_invalid_json(server):
    assert "unknown op" in server.ask(json.dumps({"op": "train"}))["error"]
    assert "invalid request json" in server.ask("{not json")["error"]
    # the loop keeps serving afterwards
    assert server.ask(json.dumps({"op": "info"}))["name"] == "rsf-synth"


def test_clean_exit_on_end_of_input(csv_path):
    s = ServerProc(server_argv(csv_path))
    assert s.ask(json.dumps({"op": "info"}))["name"] == "rsf-synth"
    assert s.close() == 0


def test_same_seed_same_predictions(csv_path):
    probe = json.dumps({"op": "predict", "x": [[0.1, -0.2], [1.5, 0.4], [-0.6, 2.0]]})
    outs = []
    for _ in range(2):
        s = ServerProc(server_argv(csv_path, seed=5))
        outs.append(s.ask(probe)["y"])
        s.close()
    assert outs[0] == outs[1]


def test_startup_failure_reports_on_stderr(tmp_path):
    argv = server_argv(tmp_path / "missing.csv")
    proc = subprocess.run(argv, input="", capture_output=True, text=True, timeout=60)
    assert proc.returncode != 0
    assert "startup failed" in proc.stderr
    assert proc.stdout == ""


def test_export_csv_writes_served_features(csv_path, tmp_path):
    out = tmp_path / "served.csv"
    argv = server_argv(csv_path) + ["--export-csv", str(out)]
    proc = subprocess.run(argv, input="", capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[-2:] == ["time", "event"]
    assert len(header) == 2 + 2  # top-2 features plus the outcome columns
    assert "kept top 2 features" in proc.stderr
