import json
import os
import runpy
import sys

import numpy as np
import pytest

from prescriptor import cli, tables
from prescriptor import experiments as ex
from prescriptor.metrics import MetricError

SMALL = {"sample_sizes": [32, 64], "replications": 2, "n_queries": 4,
         "oracle_m": 200, "eval_m": 200, "validation_size": 20}


def _write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, command, cfg, out="out", extra=()):
    out_dir = tmp_path / out
    code = cli.main([command, "--config", _write_config(tmp_path, cfg), "--out", str(out_dir),
                     *extra])
    return code, out_dir


def test_gen_data_row_count_and_rerun(tmp_path):
    cfg = {"instance": "portfolio", "sample_sizes": [8], "replications": 1, "seed": 5}
    code, out = _run(tmp_path, "gen-data", cfg, "a")
    assert code == 0
    path = out / "portfolio_N8_rep0.csv"
    lines = path.read_text().splitlines()
    assert len(lines) == 9
    assert lines[0].split(",") == ["x1", "x2", "x3"] + [f"y{j}" for j in range(1, 13)]
    _, out2 = _run(tmp_path, "gen-data", cfg, "b")
    assert (out2 / "portfolio_N8_rep0.csv").read_bytes() == path.read_bytes()


def test_gen_data_shipment_columns(tmp_path):
    code, out = _run(tmp_path, "gen-data", {"instance": "shipment", "sample_sizes": [8],
                                            "replications": 2})
    assert code == 0
    for r in range(2):
        header = (out / f"shipment_N8_rep{r}.csv").read_text().splitlines()[0].split(",")
        assert len(header) == 3 + 12


def test_gen_data_censored_columns(tmp_path):
    code, out = _run(tmp_path, "gen-data", {"instance": "newsvendor", "sample_sizes": [50],
                                            "replications": 1, "censoring": {"rate": 0.3}})
    assert code == 0
    header = (out / "newsvendor_N50_rep0.csv").read_text().splitlines()[0]
    assert header.split(",")[-2:] == ["u", "delta"]


def test_config_errors_exit_2(tmp_path, capsys):
    assert _run(tmp_path, "convergence", {"instance": "nope"})[0] == 2
    assert _run(tmp_path, "convergence", {"sample_sizes": [64, 32]})[0] == 2
    assert _run(tmp_path, "convergence", {"replications": 0})[0] == 2
    assert _run(tmp_path, "convergence", {"bogus_key": 1})[0] == 2
    assert _run(tmp_path, "convergence", dict(SMALL, methods=["magic"]))[0] == 2
    assert cli.main(["convergence", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["convergence", "--config", str(bad)]) == 2
    assert cli.main(["convergence", "--threads", "0"]) == 2
    # ERM on a constrained instance is a configuration error
    assert _run(tmp_path, "erm-study", dict(SMALL, instance="portfolio"))[0] == 2
    assert "config error" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(cfg, threads):
        raise MetricError("SAA already perfect; P undefined")

    monkeypatch.setitem(ex.STUDIES, "prescriptiveness", boom)
    assert _run(tmp_path, "prescriptiveness", SMALL)[0] == 3


def test_convergence_report(tmp_path):
    cfg = dict(SMALL, instance="portfolio", methods=["knn", "saa"])
    code, out = _run(tmp_path, "convergence", cfg)
    assert code == 0
    columns, rows = tables.read_rows(out / "convergence.csv")
    assert columns == ["method", "N", "replication", "true_risk", "benchmark", "gap"]
    assert len(rows) == 2 * 2 * 2
    meta = json.loads((out / "convergence.json").read_text())
    assert meta["config"]["methods"] == ["knn", "saa"]
    assert {(s["method"], s["N"]) for s in meta["summary"]} == {
        (m, n) for m in ("knn", "saa") for n in (32, 64)}
    bench = {r["benchmark"] for r in rows}
    assert len(bench) == 1
    assert all(r["gap"] == r["true_risk"] - r["benchmark"] for r in rows)


def test_report_csv_round_trip(tmp_path):
    cfg = ex.ExperimentConfig.from_dict(dict(SMALL, instance="shipment", methods=["knn", "saa"]))
    report = ex.run_convergence(cfg)
    path = tmp_path / "r.csv"
    tables.write_rows(path, report.columns, report.rows)
    columns, rows = tables.read_rows(path)
    assert columns == report.columns
    assert rows == [{c: r[c] for c in columns} for r in report.rows]


def test_saa_prescription_ignores_x():
    cfg = ex.ExperimentConfig.from_dict(dict(SMALL, instance="portfolio", methods=["saa"]))
    inst = ex.Instance(cfg)
    X, Y = inst.training(64, 0)
    from prescriptor.solve import make_prescription, prescribe
    p = make_prescription("saa", {}, X, Y, inst.problem)
    bank = ex.QueryBank(inst)
    Z = np.array([prescribe(p, x) for x in bank.X])
    assert np.all(Z == Z[0])


def test_dimension_study_pollution_zero_matches_convergence():
    base = dict(SMALL, instance="shipment", methods=["knn"], sample_sizes=[64])
    conv = ex.run_convergence(ex.ExperimentConfig.from_dict(base))
    dim = ex.run_dimension_study(ex.ExperimentConfig.from_dict(dict(base, pollution_dims=[0, 4])))
    assert dim.columns == ["method", "N", "pollution_dims", "replication", "true_risk"]
    assert len(dim.rows) == 1 * 1 * 2 * 2
    zero = [r["true_risk"] for r in dim.rows if r["pollution_dims"] == 0]
    assert zero == [r["true_risk"] for r in conv.rows]


def test_prescriptiveness_report():
    cfg = ex.ExperimentConfig.from_dict(dict(SMALL, instance="shipment", methods=["knn", "saa"]))
    rep = ex.run_prescriptiveness(cfg)
    assert len(rep.rows) == 2 * 2 * 2
    for r in rep.rows:
        assert r["P"] <= 1.0
        if r["method"] == "saa":
            assert r["P"] == 0.0


def test_censoring_rate_zero_corrected_equals_naive():
    cfg = ex.ExperimentConfig.from_dict(dict(SMALL, instance="newsvendor", methods=["knn"],
                                             censoring={"rate": 0.0}, problem={"tau": 0.7}))
    rep = ex.run_censoring_study(cfg)
    assert "censoring_rate" in rep.columns
    naive = {(r["N"], r["replication"]): r["true_risk"] for r in rep.rows
             if r["method"] == "knn:naive"}
    km = {(r["N"], r["replication"]): r["true_risk"] for r in rep.rows
          if r["method"] == "knn:km"}
    assert naive == km
    assert all(r["censoring_rate"] == 0.0 for r in rep.rows)


def test_censoring_rate_reported():
    cfg = ex.ExperimentConfig.from_dict(dict(SMALL, instance="newsvendor", methods=["knn"],
                                             sample_sizes=[500], replications=1,
                                             censoring={"rate": 0.3}, problem={"tau": 0.7}))
    rep = ex.run_censoring_study(cfg)
    assert 0.2 < rep.rows[0]["censoring_rate"] < 0.4


def test_erm_study_schema(tmp_path):
    cfg = dict(SMALL, methods=["erm", "rf"], sample_sizes=[64], replications=1,
               hyperparams={"rf": {"n_trees": 10}})
    code, out = _run(tmp_path, "erm-study", cfg)
    assert code == 0
    columns, rows = tables.read_rows(out / "erm-study.csv")
    assert columns == ["method", "N", "replication", "true_risk"]
    assert [r["method"] for r in rows] == ["erm", "rf"]
    assert all(np.isfinite(r["true_risk"]) for r in rows)


def test_plot_script_is_emitted_and_valid(tmp_path):
    cfg = dict(SMALL, instance="portfolio", methods=["saa"], sample_sizes=[32], replications=1)
    code, out = _run(tmp_path, "convergence", cfg, extra=["--emit-plot-script"])
    assert code == 0
    script = out / "plot_convergence.py"
    compile(script.read_text(), str(script), "exec")
    plt = pytest.importorskip("matplotlib")
    plt.use("Agg")
    monkey_argv = sys.argv
    try:
        sys.argv = [str(script), str(out / "convergence.csv")]
        runpy.run_path(str(script))
    finally:
        sys.argv = monkey_argv
    assert os.path.exists(out / "convergence.png")


def test_seed_flag_overrides_config(tmp_path):
    cfg = {"instance": "portfolio", "sample_sizes": [8], "replications": 1, "seed": 1}
    path = _write_config(tmp_path, cfg)
    assert cli.main(["gen-data", "--config", path, "--out", str(tmp_path / "a"),
                     "--seed", "9"]) == 0
    cfg["seed"] = 9
    _, out = _run(tmp_path, "gen-data", cfg, "b")
    name = "portfolio_N8_rep0.csv"
    assert (tmp_path / "a" / name).read_bytes() == (out / name).read_bytes()
    meta = json.loads((tmp_path / "a" / "gen-data.json").read_text())
    assert meta["config"]["seed"] == 9


def test_invalid_seed_rejected():
    with pytest.raises(SystemExit):
        cli.main(["gen-data", "--seed", "-1"])
