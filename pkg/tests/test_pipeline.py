import json

import pytest

import main as main_module
import pipeline as pipeline_module
from expansion.errors import NotInDomain, ResourceLimit
from services.artifact_service import read_csv_rows


class _StubNotifier:
    sent = []

    def __init__(self, webhook_url):
        self.webhook_url = webhook_url

    def send_run_summary(self, **kwargs):
        _StubNotifier.sent.append(kwargs)
        return True


def _patch_config(monkeypatch, tmp_path, **overrides):
    monkeypatch.setattr(pipeline_module.Config, "OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.setattr(pipeline_module.Config, "RUN_STATE_FILE", str(tmp_path / "state.json"))
    monkeypatch.setattr(pipeline_module.Config, "SLACK_ENABLED", False)
    monkeypatch.setattr(pipeline_module.Config, "SLACK_WEBHOOK_URL", "")
    monkeypatch.setattr(pipeline_module.Config, "MC_SAMPLES", 20_000)
    monkeypatch.setattr(pipeline_module.Config, "MC_SHARDS", 2)
    for name, value in overrides.items():
        monkeypatch.setattr(pipeline_module.Config, name, value)
    _StubNotifier.sent = []
    monkeypatch.setattr(pipeline_module, "SlackNotifier", _StubNotifier)


def test_graphs_reports_known_counts(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path)

    result = pipeline_module.run("graphs", {"n": 4})

    assert result.ok
    rows = read_csv_rows(tmp_path / "out" / "graph_counts.csv")
    assert [(row["n"], row["connected"], row["two_connected"]) for row in rows] == [
        ("2", "1", "1"),
        ("3", "4", "1"),
        ("4", "38", "10"),
    ]
    listings = json.loads((tmp_path / "out" / "graph_listings.json").read_text())
    assert len(listings["data"]["two_connected_4"]) == 10
    assert listings["meta"]["config"]["options"] == {"n": 4}


def test_run_state_records_artifact_digests(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path)

    result = pipeline_module.run("graphs", {"n": 3})

    state = json.loads((tmp_path / "state.json").read_text())
    assert state["subcommand"] == "graphs"
    assert set(state["artifacts"]) == {a.path for a in result.artifacts}
    assert all(len(digest) == 64 for digest in state["artifacts"].values())


def test_reruns_are_byte_identical(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path, MODEL_DIMENSION=1)

    pipeline_module.run("beta", {"d": 1, "n_max": 2})
    first = json.loads((tmp_path / "state.json").read_text())["artifacts"]
    pipeline_module.run("beta", {"d": 1, "n_max": 2})
    second = json.loads((tmp_path / "state.json").read_text())["artifacts"]

    assert first == second


def test_beta_matches_hard_rods(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path, MODEL_DIMENSION=1, MC_SAMPLES=100_000)

    result = pipeline_module.run("beta", {"d": 1, "n_max": 3})

    assert result.ok, result.failures
    rows = read_csv_rows(tmp_path / "out" / "beta_table.csv")
    assert [int(row["n"]) for row in rows] == [1, 2, 3]
    assert float(rows[0]["exact_1d"]) == pytest.approx(-2 * 0.1)


def test_free_energy_records_skips_outside_domain(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path, SERIES_ORDER=1, BIG_ORDER=1, CLOUD_MAX=0)

    def _outside(*_args, **_kwargs):
        raise NotInDomain("convergence conditions fail: c1", {"c1": -0.1})

    monkeypatch.setattr(pipeline_module, "free_energy_bounds", _outside)

    result = pipeline_module.run("free-energy", {"rho_small": [0.1], "rho_big": [0.01]})

    assert result.ok
    assert len(result.skipped) == 1
    rows = read_csv_rows(tmp_path / "out" / "free_energy_sweep.csv")
    assert rows[0]["status"] == "not-in-domain"
    assert rows[0]["lower"] == "nan"


def test_domain_writes_curve_and_fit(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path, MODEL_DIMENSION=3, RHO_SMALL=0.5, RHO_BIG=0.0)

    result = pipeline_module.run("domain", {})

    names = sorted(a.path.rsplit("/", 1)[-1] for a in result.artifacts)
    assert names == ["density_curve.csv", "density_curve_fit.json", "domain_margins.json"]
    rows = read_csv_rows(tmp_path / "out" / "density_curve.csv")
    assert len(rows) == 25
    log_bounds = [float(row["log_bound"]) for row in rows]
    assert log_bounds[-1] < log_bounds[0]


def test_verify_tree_graph_suite_passes(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path)

    result = pipeline_module.run("verify", {"suites": ["tree-graph"]})

    assert result.ok
    rows = read_csv_rows(tmp_path / "out" / "verify.csv")
    assert [row["case"] for row in rows] == ["n=2", "n=3", "n=4", "n=5"]
    assert all(row["passed"] == "True" for row in rows)


def test_failures_notify_slack_when_webhook_set(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path, SLACK_WEBHOOK_URL="https://hooks.example/abc")

    result = pipeline_module.run("graphs", {"n": 2})
    assert result.ok
    assert _StubNotifier.sent == []

    def _failing(options, artifacts, result):
        result.failures.append("beta_1: off by 5 sigma")

    monkeypatch.setattr(pipeline_module, "_run_graphs", _failing)
    result = pipeline_module.run("graphs", {"n": 2})
    assert not result.ok
    assert len(_StubNotifier.sent) == 1
    assert _StubNotifier.sent[0]["failures"] == ["beta_1: off by 5 sigma"]


def test_slack_flag_forces_summary(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path, SLACK_WEBHOOK_URL="https://hooks.example/abc")

    pipeline_module.run("graphs", {"n": 2}, notify_slack=True)

    assert len(_StubNotifier.sent) == 1
    assert _StubNotifier.sent[0]["subcommand"] == "graphs"


def test_unknown_subcommand_is_rejected(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path)
    with pytest.raises(ValueError):
        pipeline_module.run("plot")


def test_cli_maps_toolkit_errors_to_exit_codes(tmp_path, monkeypatch, capsys):
    _patch_config(monkeypatch, tmp_path)

    def _too_big(*_args, **_kwargs):
        raise ResourceLimit("connected graphs with n=9 exceed the cap of 7")

    monkeypatch.setattr(main_module, "run", _too_big)
    with pytest.raises(SystemExit) as exc:
        main_module.main(["graphs", "--n", "9"])

    assert exc.value.code == 3
    assert capsys.readouterr().err.strip() == "resource-limit: connected graphs with n=9 exceed the cap of 7"


def test_cli_rejects_invalid_config(tmp_path, monkeypatch, capsys):
    _patch_config(monkeypatch, tmp_path)
    monkeypatch.setattr(main_module.Config, "SMALL_RADIUS", main_module.Config.SMALL_RADIUS)

    with pytest.raises(SystemExit) as exc:
        main_module.main(["graphs", "--r", "-1"])

    assert exc.value.code == 1
    assert "SMALL_RADIUS" in capsys.readouterr().out


def test_cli_exits_nonzero_on_failures(tmp_path, monkeypatch):
    _patch_config(monkeypatch, tmp_path)

    def _failed_run(subcommand, options, notify_slack=False):
        result = pipeline_module.RunResult(subcommand=subcommand)
        result.failures.append("sandwich/N_R=1: observed 0.1, expected [0, 0.05]")
        return result

    monkeypatch.setattr(main_module, "run", _failed_run)
    with pytest.raises(SystemExit) as exc:
        main_module.main(["verify", "--suite", "sandwich"])
    assert exc.value.code == 1
