import json

import pytest
from click.testing import CliRunner

from feedmask.cli import main
from feedmask.config import (
    DEFAULTS,
    build_gateway,
    default_scripts_dir,
    load_config_file,
    resolve_settings,
)


@pytest.fixture()
def runner():
    return CliRunner()


def impression_line(iid):
    return json.dumps(
        {
            "impressionId": iid,
            "userId": "local",
            "timestamp": "2024-01-01T00:00:00Z",
            "displayed": [
                {"item": {"id": f"{iid}-a", "title": "The Midnight Lighthouse"}, "clicked": True},
                {"item": {"id": f"{iid}-b", "title": "Cooking with Iron Pots"}, "clicked": False},
                {"item": {"id": f"{iid}-c", "title": "Galaxy Probe Sets Record"}, "clicked": False},
            ],
        }
    )


class TestSettings:
    def test_defaults_apply(self):
        settings = resolve_settings({}, env={})
        assert settings["data_dir"] == DEFAULTS["data_dir"]
        assert settings["gateway_url"] is None
        assert settings["clock"] == "system"

    def test_precedence_flag_over_env_over_file(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"model": "from-file", "seed": 9}))
        env = {"FEEDMASK_MODEL": "from-env"}
        settings = resolve_settings({"model": "from-flag"}, config_path=config, env=env)
        assert settings["model"] == "from-flag"
        assert settings["seed"] == 9
        settings = resolve_settings({}, config_path=config, env=env)
        assert settings["model"] == "from-env"
        settings = resolve_settings({}, config_path=config, env={})
        assert settings["model"] == "from-file"

    def test_env_names_use_prefix(self):
        env = {"FEEDMASK_DATA_DIR": "/tmp/x", "FEEDMASK_GATEWAY_URL": "http://gw",
               "FEEDMASK_TOKEN": "sekrit"}
        settings = resolve_settings({}, env=env)
        assert settings["data_dir"] == "/tmp/x"
        assert settings["gateway_url"] == "http://gw"
        assert settings["token"] == "sekrit"

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"apiKey": "nope"}))
        with pytest.raises(ValueError):
            load_config_file(config)

    def test_bad_clock_rejected(self):
        with pytest.raises(ValueError):
            resolve_settings({"clock": "sundial"}, env={})

    def test_stub_gateway_from_bundled_scripts(self):
        gateway = build_gateway(resolve_settings({}, env={}))
        assert gateway.backend.backend_id == "stub"
        assert default_scripts_dir().is_dir()

    def test_http_gateway_when_url_given(self):
        settings = resolve_settings({"gateway_url": "http://gw", "model": "m1"}, env={})
        gateway = build_gateway(settings)
        assert gateway.backend.backend_id == "http:m1"


class TestIngestCommand:
    def test_ingest_reads_jsonl(self, runner, tmp_path):
        events = tmp_path / "events.jsonl"
        events.write_text("\n".join(impression_line(f"imp-{i}") for i in range(3)) + "\n")
        data_dir = tmp_path / "data"
        result = runner.invoke(
            main,
            ["ingest", "--file", str(events), "--data-dir", str(data_dir),
             "--clock", "logical"],
        )
        assert result.exit_code == 0, result.output
        assert "ingested 3 impressions (0 duplicates)" in result.output
        assert "profile version 3" in result.output

    def test_reingest_counts_duplicates(self, runner, tmp_path):
        events = tmp_path / "events.jsonl"
        events.write_text(impression_line("imp-0") + "\n")
        data_dir = tmp_path / "data"
        args = ["ingest", "--file", str(events), "--data-dir", str(data_dir),
                "--clock", "logical"]
        assert runner.invoke(main, args).exit_code == 0
        result = runner.invoke(main, args)
        assert result.exit_code == 0
        assert "ingested 0 impressions (1 duplicates)" in result.output


class TestFilterCommand:
    def test_filter_writes_result_file(self, runner, tmp_path):
        data_dir = tmp_path / "data"
        feed = tmp_path / "feed.json"
        feed.write_text(json.dumps({
            "items": [
                {"id": "q1", "title": "Championship recap and standings"},
                {"id": "q2", "title": "Haunted asylum horror night"},
            ]
        }))
        out = tmp_path / "result.json"

        from feedmask.config import build_engine

        engine = build_engine(resolve_settings({"data_dir": str(data_dir), "clock": "logical"}, env={}))
        engine.create_rule("I do not want to see content containing horror elements")
        engine.close()

        result = runner.invoke(
            main,
            ["filter", "--feed", str(feed), "--out", str(out),
             "--data-dir", str(data_dir), "--clock", "logical"],
        )
        assert result.exit_code == 0, result.output
        assert "kept 1 of 2 items (1 filtered" in result.output
        written = json.loads(out.read_text())
        assert [item["id"] for item in written["kept"]] == ["q1"]
        assert written["filtered"][0]["itemId"] == "q2"

    def test_feed_may_be_bare_list(self, runner, tmp_path):
        feed = tmp_path / "feed.json"
        feed.write_text(json.dumps([{"id": "q1", "title": "Quiet news day"}]))
        out = tmp_path / "result.json"
        result = runner.invoke(
            main,
            ["filter", "--feed", str(feed), "--out", str(out),
             "--data-dir", str(tmp_path / "data"), "--clock", "logical"],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["filtered"] == []


class TestEvalCommand:
    def test_proxy_on_bundled_fixture(self, runner, tmp_path):
        out = tmp_path / "results.jsonl"
        csv_path = tmp_path / "table.csv"
        result = runner.invoke(
            main,
            ["eval", "proxy", "--method", "A", "--k", "4", "--quota", "5",
             "--seed", "3", "--out", str(out), "--csv", str(csv_path)],
        )
        assert result.exit_code == 0, result.output
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert rows
        assert all(row["method"] == "A" for row in rows)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "method,bucket,users,steps,correct,accuracy"
        assert len(lines) > 1

    def test_http_backend_requires_url(self, runner, tmp_path, monkeypatch):
        monkeypatch.delenv("FEEDMASK_GATEWAY_URL", raising=False)
        result = runner.invoke(
            main,
            ["eval", "proxy", "--backend", "http", "--out", str(tmp_path / "o.jsonl")],
        )
        assert result.exit_code != 0
        assert "gateway-url" in result.output.lower()

    def test_unknown_method_rejected_by_parser(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["eval", "proxy", "--method", "Z", "--out", str(tmp_path / "o.jsonl")],
        )
        assert result.exit_code != 0


class TestServeCommand:
    def test_help_mentions_host_and_port(self, runner):
        result = runner.invoke(main, ["serve", "--help"])
        assert result.exit_code == 0
        assert "--host" in result.output
        assert "--port" in result.output
