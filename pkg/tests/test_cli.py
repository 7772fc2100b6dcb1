import json
import os
import sys

import numpy as np
import pytest

from statshap.cli import load_dataset, main

ECHO = os.path.join(os.path.dirname(__file__), "echo_server.py")


def run(args):
    return main(args)


@pytest.fixture
def synth_csv(tmp_path):
    path = tmp_path / "data.csv"
    code = run([
        "synth", "--n", "120", "--features", "3", "--weights", "1.0,-0.5,0.25",
        "--skew", "1.0", "--censor", "0.2", "--seed", "5", "--output", str(path),
    ])
    assert code == 0
    return str(path)


# ---------------------------------------------------------------------------
# synth + ingestion
# ---------------------------------------------------------------------------


def test_synth_writes_loadable_csv(synth_csv):
    ds = load_dataset(synth_csv)
    assert ds.n_rows == 120 and ds.n_features == 3
    assert ds.feature_names == ("x1", "x2", "x3")
    assert (ds.time > 0).all()


def test_synth_event_rate_matches_censoring(tmp_path):
    path = tmp_path / "big.csv"
    assert run(["synth", "--n", "1000", "--censor", "0.25", "--seed", "1",
                "--output", str(path)]) == 0
    ds = load_dataset(str(path))
    censored = 1.0 - ds.event.mean()
    assert abs(censored - 0.25) <= 0.05


def test_csv_requires_header_with_time(tmp_path, capsys):
    p = tmp_path / "no_time.csv"
    p.write_text("a,b\n1,2\n")
    assert run(["explain", "--data", str(p), "--row", "0"]) == 3
    assert "time" in capsys.readouterr().err


def test_csv_rejects_missing_values(tmp_path, capsys):
    p = tmp_path / "holes.csv"
    p.write_text("a,time\n1.0,2.0\n,3.0\n")
    assert run(["explain", "--data", str(p), "--row", "0"]) == 3
    err = capsys.readouterr().err
    assert "holes.csv:3" in err and "imputation" in err


def test_csv_rejects_non_numeric_cells(tmp_path, capsys):
    p = tmp_path / "text.csv"
    p.write_text("a,time\noops,2.0\n")
    assert run(["explain", "--data", str(p), "--row", "0"]) == 3
    assert "text.csv:2" in capsys.readouterr().err


def test_csv_event_column_round_trips(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text("a,time,event\n1.0,2.0,1\n2.0,3.0,0\n3.0,1.5,true\n")
    ds = load_dataset(str(p))
    assert ds.event.tolist() == [True, False, True]


# ---------------------------------------------------------------------------
# explain
# ---------------------------------------------------------------------------


def test_explain_report_satisfies_efficiency(synth_csv, tmp_path):
    out = tmp_path / "report.json"
    code = run([
        "explain", "--data", synth_csv, "--model", "builtin:linear",
        "--statistic", "median", "--row", "3", "--output", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    assert abs(report["efficiency_residual"]) < 1e-9
    phis = [a["phi"] for a in report["attributions"]]
    assert len(phis) == 3
    assert sum(phis) == pytest.approx(report["prediction"] - report["phi0"], abs=1e-9)
    assert report["anchor"]["synthetic"] is False
    assert report["config"]["statistic"] == "median"


def test_explain_q_half_equals_median(synth_csv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["explain", "--data", synth_csv, "--model", "builtin:linear", "--row", "0"]
    assert run(base + ["--statistic", "median", "--output", str(a)]) == 0
    assert run(base + ["--statistic", "q=0.5", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_explain_row_out_of_range_lists_valid_rows(synth_csv, capsys):
    assert run(["explain", "--data", synth_csv, "--row", "999"]) == 3
    assert "0..119" in capsys.readouterr().err


def test_explain_values_arity_mismatch(synth_csv, capsys):
    assert run(["explain", "--data", synth_csv, "--values", "1.0,2.0"]) == 3
    assert "3 features" in capsys.readouterr().err


def test_explain_unknown_model_spec(synth_csv, capsys):
    assert run(["explain", "--data", synth_csv, "--model", "builtin:mlp", "--row", "0"]) == 3
    assert "unknown builtin model" in capsys.readouterr().err


def test_explain_table_format(synth_csv, capsys):
    code = run([
        "explain", "--data", synth_csv, "--model", "builtin:tree",
        "--statistic", "mean", "--sampler", "marginal", "--row", "1", "--format", "table",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "efficiency residual" in out and "anchor" in out and "x2" in out


def test_explain_over_external_echo_server(tmp_path):
    csv = tmp_path / "two.csv"
    csv.write_text("a,b,time\n" + "\n".join(
        f"{i / 7.0},{(i * 3 % 5) / 5.0},{1.0 + i}" for i in range(12)
    ) + "\n")
    out = tmp_path / "ext.json"
    code = run([
        "explain", "--data", str(csv),
        "--model", f"external:{sys.executable} {ECHO}",
        "--statistic", "median", "--sampler", "marginal", "--row", "2",
        "--output", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    # echo predicts the first feature, so under shared marginal references
    # feature b is an exact dummy
    assert report["attributions"][1]["phi"] == 0.0
    assert abs(report["efficiency_residual"]) < 1e-9


def test_external_arity_mismatch_is_reported(synth_csv, capsys):
    # echo declares 2 features; the synth dataset has 3
    code = run([
        "explain", "--data", synth_csv,
        "--model", f"external:{sys.executable} {ECHO}", "--row", "0",
    ])
    assert code == 3
    assert "external model expects 2" in capsys.readouterr().err


def test_bridge_failures_exit_with_model_error(synth_csv, capsys):
    code = run([
        "explain", "--data", synth_csv,
        "--model", "external:/nonexistent-binary-for-statshap-tests", "--row", "0",
    ])
    assert code == 4
    assert "bridge error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# anchor
# ---------------------------------------------------------------------------


def test_anchor_median_is_a_real_row(synth_csv, tmp_path):
    out = tmp_path / "anchor.json"
    code = run([
        "anchor", "--data", synth_csv, "--model", "builtin:forest",
        "--statistic", "median", "--n-trees", "10", "--output", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["anchor"]["synthetic"] is False
    assert isinstance(payload["anchor"]["index"], int)
    assert set(payload["anchor"]["values"]) == {"x1", "x2", "x3"}


def test_anchor_mean_is_synthetic(synth_csv, tmp_path):
    out = tmp_path / "anchor.json"
    code = run([
        "anchor", "--data", synth_csv, "--model", "builtin:linear",
        "--statistic", "mean", "--output", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["anchor"]["synthetic"] is True
    assert "index" not in payload["anchor"]


# ---------------------------------------------------------------------------
# importance / experiment
# ---------------------------------------------------------------------------


def test_importance_with_top_k(synth_csv, tmp_path):
    out = tmp_path / "imp.json"
    code = run([
        "importance", "--data", synth_csv, "--model", "builtin:linear",
        "--n-repeats", "3", "--top-k", "2", "--output", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert len(payload["scores"]) == 3
    assert len(payload["top_k"]) == 2
    # x1 carries the largest weight in the generating process
    assert "x1" in payload["top_k"]


def test_importance_top_k_retrain_pipeline(synth_csv):
    # the scores support a select-then-retrain flow with exactly k features
    from statshap.harness import permutation_importance, select_top_k
    from statshap.models import fit_forest
    import statshap as ss

    ds = load_dataset(synth_csv)
    model = fit_forest(ds, n_trees=20, max_depth=5, seed=0)
    scores = permutation_importance(model, ds, n_repeats=3, seed=0).scores
    kept = select_top_k(scores, 2)
    restricted = ss.Dataset(
        feature_names=tuple(ds.feature_names[i] for i in kept),
        features=ds.features[:, kept],
        time=ds.time,
        event=ds.event,
    )
    refit = fit_forest(restricted, n_trees=20, max_depth=5, seed=0)
    assert refit.n_features() == 2


def test_experiment_is_byte_identical_across_runs(synth_csv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = [
        "experiment", "--data", synth_csv, "--model", "builtin:forest",
        "--n-trees", "20", "--n-explained", "4", "--seed", "3",
    ]
    assert run(args + ["--output", str(a)]) == 0
    assert run(args + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    payload = json.loads(a.read_text())
    assert {r["method"] for r in payload["rows"]} == {
        "mean-SHAP(f) vs SHAP(g)",
        "median-SHAP(f) vs SHAP(g)",
    }
    assert payload["config"]["n_explained"] == 4


def test_experiment_table_format(synth_csv, capsys):
    code = run([
        "experiment", "--data", synth_csv, "--model", "builtin:forest",
        "--n-trees", "10", "--n-explained", "2", "--format", "table",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "mean-SHAP(f) vs SHAP(g)" in out and "anchor" in out


# ---------------------------------------------------------------------------
# usage
# ---------------------------------------------------------------------------


def test_usage_errors_exit_2(synth_csv):
    with pytest.raises(SystemExit) as exc:
        run(["explain", "--data", synth_csv, "--statistic", "q=1.5", "--row", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["explain", "--data", synth_csv, "--estimator", "sampled:none", "--row", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["nonsense"])
    assert exc.value.code == 2


def test_explain_requires_an_instance(synth_csv, capsys):
    assert run(["explain", "--data", synth_csv]) == 3
    assert "--row or --values" in capsys.readouterr().err
