import json
import socket
import threading
import time

import pytest

from colagg.cli import main


@pytest.fixture()
def dataset(tmp_path):
    d = tmp_path / "data"
    rc = main(["gen", "--rows", "600", "--groups", "6", "--parallelism", "2",
               "--seed", "2", "--out", str(d)])
    assert rc == 0
    return d


def test_gen_writes_part_files(dataset):
    assert sorted(p.name for p in dataset.iterdir()) == ["part-0.csv", "part-1.csv"]


def test_agg_json_output(dataset, capsys):
    rc = main(["agg", "--op", "count", "--col", "v", "--parallelism", "2",
               "--json", str(dataset)])
    assert rc == 0
    body = json.loads(capsys.readouterr().out)
    assert body["value"] == 600 and body["dtype"] == "int64"


def test_groupby_with_out_csv(dataset, tmp_path, capsys):
    out = tmp_path / "grouped.csv"
    rc = main(["groupby", "--keys", "k", "--values", "v", "--ops", "sum,count",
               "--parallelism", "2", "--out", str(out), "--json", str(dataset)])
    assert rc == 0
    body = json.loads(capsys.readouterr().out)
    assert body["rows"] == 6 and out.exists()


def test_verify_pass_exit_zero(dataset):
    assert main(["verify", "--op", "mean", "--col", "v", "--parallelism", "2",
                 str(dataset)]) == 0


def test_verify_failure_exit_one(dataset, monkeypatch, capsys):
    from colagg import bench
    from colagg.bench import VerifyReport

    monkeypatch.setattr(
        bench, "run_verify",
        lambda *a, **k: VerifyReport(False, 1.0, "x", 0, "forced mismatch"),
    )
    rc = main(["verify", "--op", "mean", "--col", "v", str(dataset)])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


def test_usage_error_exit_two(dataset):
    # 2 part files but parallelism 3: one file per rank is mandatory
    rc = main(["agg", "--op", "sum", "--col", "v", "--parallelism", "3", str(dataset)])
    assert rc == 2


def test_bad_flag_exits_two():
    with pytest.raises(SystemExit) as err:
        main(["agg", "--op", "not-an-op", "--col", "v", "x"])
    assert err.value.code == 2


def test_missing_column_is_usage_error(dataset):
    rc = main(["agg", "--op", "sum", "--col", "nope", "--parallelism", "2",
               str(dataset)])
    assert rc == 2


def test_bench_cli(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps(
        {"rows": 400, "groups": [4], "parallelism": 2, "repetitions": 1, "warmup": 0}
    ))
    report = tmp_path / "report.csv"
    rc = main(["bench", "combiner", "--config", str(config), "--report", str(report)])
    assert rc == 0
    assert report.read_text().startswith("op,strategy,combiner,transport")


class TestRemoteMode:
    @pytest.fixture()
    def server(self):
        import uvicorn

        from colagg.service.app import create_app

        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        config = uvicorn.Config(
            create_app(), host="127.0.0.1", port=port, log_level="error"
        )
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.time() + 10
        import httpx

        url = f"http://127.0.0.1:{port}"
        while time.time() < deadline:
            try:
                if httpx.get(url + "/v1/health", timeout=1).status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.05)
        else:
            raise RuntimeError("service did not come up")
        yield url
        server.should_exit = True
        thread.join(timeout=5)

    def test_cli_against_live_service(self, server, dataset, capsys):
        rc = main(["--server", server, "agg", "--op", "sum", "--col", "v",
                   "--parallelism", "2", "--json", str(dataset)])
        assert rc == 0
        remote = json.loads(capsys.readouterr().out)
        rc = main(["agg", "--op", "sum", "--col", "v", "--parallelism", "2",
                   "--json", str(dataset)])
        assert rc == 0
        local = json.loads(capsys.readouterr().out)
        assert remote["value"] == local["value"]
        assert remote["checksum"] == local["checksum"]

    def test_remote_usage_error_maps_exit_two(self, server, dataset):
        rc = main(["--server", server, "agg", "--op", "sum", "--col", "v",
                   "--parallelism", "3", str(dataset)])
        assert rc == 2
