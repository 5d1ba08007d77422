import filecmp
import json

import pytest

from asyncbev.cli import main


def run(argv):
    return main(argv)


SIM_ARGS = ["simulate", "--seed", "7", "--duration", "3.2", "--agents", "3"]


@pytest.fixture(scope="module")
def sim_log(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    log_dir = root / "log"
    assert run(SIM_ARGS + ["--out", str(log_dir)]) == 0
    return log_dir


def tree_bytes(root):
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_simulate_writes_log(sim_log):
    for name in ("scenario", "sample", "sample_data", "ego_pose", "calibrated_sensor"):
        assert (sim_log / f"{name}.json").exists()
    assert any((sim_log / "blobs").iterdir())


def test_simulate_deterministic(sim_log, tmp_path):
    other = tmp_path / "log2"
    assert run(SIM_ARGS + ["--out", str(other)]) == 0
    assert tree_bytes(sim_log) == tree_bytes(other)


def test_validate_ok(sim_log, capsys):
    assert run(["validate", "--log", str(sim_log)]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_corrupted_blob(sim_log, tmp_path, capsys):
    import shutil

    bad = tmp_path / "bad"
    shutil.copytree(sim_log, bad)
    blob = next((bad / "blobs").iterdir())
    blob.write_bytes(blob.read_bytes()[:-1])
    assert run(["validate", "--log", str(bad)]) == 1
    assert "blob error" in capsys.readouterr().err


def test_build_and_render(sim_log, tmp_path, capsys):
    variant_dir = tmp_path / "variant"
    assert (
        run(
            [
                "build",
                "--log",
                str(sim_log),
                "--out",
                str(variant_dir),
                "--modality",
                "radar",
                "--latency-ms",
                "140",
            ]
        )
        == 0
    )
    assert (variant_dir / "variant_manifest.json").exists()
    manifest = json.loads((variant_dir / "variant_manifest.json").read_text())
    assert manifest["modality"] == "RADAR"
    assert manifest["target_latency_us"] == 140_000

    prefix = tmp_path / "frames" / "kf0"
    assert run(["render", "--variant", str(variant_dir), "--frame", "0", "--out", str(prefix)]) == 0
    for suffix in ("_raw.ppm", "_compensated.ppm", "_groundtruth.ppm"):
        path = prefix.with_name(prefix.name + suffix)
        assert path.exists()
        assert path.read_bytes().startswith(b"P6\n")


def test_render_rejects_lidar_variant(sim_log, tmp_path, capsys):
    variant_dir = tmp_path / "lvariant"
    run(
        [
            "build",
            "--log",
            str(sim_log),
            "--out",
            str(variant_dir),
            "--modality",
            "lidar",
            "--latency-ms",
            "50",
        ]
    )
    assert run(["render", "--variant", str(variant_dir), "--frame", "0", "--out", str(tmp_path / "x")]) == 1
    assert "radar" in capsys.readouterr().err


def test_sweep_writes_csv_and_figures(sim_log, tmp_path):
    out = tmp_path / "report.csv"
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps({"sweep": {"radar_ladder_ms": [0, 140], "lidar_ladder_ms": [0]}})
    )
    assert run(["sweep", "--log", str(sim_log), "--out", str(out), "--config", str(config)]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + 2 * 2 + 1
    assert out.with_name("report_iou.png").exists()
    assert out.with_name("report_improvement.png").exists()


def test_sweep_deterministic_bytes(sim_log, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"sweep": {"radar_ladder_ms": [0], "lidar_ladder_ms": []}}))
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        assert (
            run(
                [
                    "sweep",
                    "--log",
                    str(sim_log),
                    "--out",
                    str(out),
                    "--no-figures",
                    "--config",
                    str(config),
                ]
            )
            == 0
        )
    assert a.read_bytes() == b.read_bytes()


def test_config_precedence_flags_over_file(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"seed": 1, "duration_s": 1.6, "agents": 2}))
    from_config = tmp_path / "from_config"
    assert run(["simulate", "--config", str(config), "--out", str(from_config)]) == 0
    flagged = tmp_path / "flagged"
    assert (
        run(["simulate", "--config", str(config), "--seed", "9", "--out", str(flagged)]) == 0
    )
    cfg_scenario = json.loads((from_config / "scenario.json").read_text())
    flag_scenario = json.loads((flagged / "scenario.json").read_text())
    assert cfg_scenario["seed"] == 1  # config beat the default
    assert flag_scenario["seed"] == 9  # flag beat the config
    assert flag_scenario["duration_us"] == 1_600_000  # config value still applies


def test_jobs_env_fallback(sim_log, tmp_path, monkeypatch):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"sweep": {"radar_ladder_ms": [0], "lidar_ladder_ms": []}}))
    monkeypatch.setenv("ASYNCBEV_JOBS", "2")
    out = tmp_path / "env.csv"
    assert (
        run(["sweep", "--log", str(sim_log), "--out", str(out), "--no-figures", "--config", str(config)])
        == 0
    )
    serial = tmp_path / "serial.csv"
    monkeypatch.delenv("ASYNCBEV_JOBS")
    assert (
        run(
            [
                "sweep",
                "--log",
                str(sim_log),
                "--out",
                str(serial),
                "--no-figures",
                "--jobs",
                "1",
                "--config",
                str(config),
            ]
        )
        == 0
    )
    assert out.read_bytes() == serial.read_bytes()


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        run(["sweep", "--log", "x", "--out", "y", "--definitely-not-a-flag"])
    assert excinfo.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_log_exits_1(tmp_path, capsys):
    assert run(["validate", "--log", str(tmp_path / "nope")]) == 1
    assert "schema error" in capsys.readouterr().err
