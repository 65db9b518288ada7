import json

from pricelab.cli import EXIT_CONFIG, EXIT_OK, main


def small_config(out_dir):
    return {
        "environment": {
            "d": 1,
            "theta0": [0.6],
            "covariate_law": {"type": "uniform-box", "bounds": [[-0.5, 0.5]]},
            "noise_law": {"type": "uniform", "lo": 0.2, "hi": 1.0},
            "horizon_n": 100,
            "theta_box": [[0.0, 1.0]],
            "z_support": [0.0, 1.0],
        },
        "policies": [
            {"name": "oracle"},
            {"name": "deepc", "gamma": 0.5},
        ],
        "run": {
            "reps": 2,
            "base_seed": 3,
            "horizons": [100, 400],
            "out_dir": str(out_dir),
            "traces": True,
        },
    }


def test_report_renders_figures_from_results(tmp_path):
    out = tmp_path / "res"
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(small_config(out)), encoding="utf-8")
    assert main(["run", "--config", str(cfg_path)]) == EXIT_OK
    assert main(["sweep", "--config", str(cfg_path), "--param", "gamma",
                 "--values", "0.5,2"]) == EXIT_OK

    assert main(["report", "--dir", str(out)]) == EXIT_OK
    for name in ("regret_vs_horizon.png", "regret_quantiles.png", "sweep.png", "traces.png"):
        f = out / name
        assert f.exists() and f.stat().st_size > 1000


def test_report_separate_output_directory(tmp_path):
    out = tmp_path / "res"
    figs = tmp_path / "figs"
    cfg_path = tmp_path / "config.json"
    data = small_config(out)
    data["run"]["horizons"] = [100]
    data["run"]["traces"] = False
    cfg_path.write_text(json.dumps(data), encoding="utf-8")
    assert main(["run", "--config", str(cfg_path)]) == EXIT_OK
    assert main(["report", "--dir", str(out), "--out", str(figs)]) == EXIT_OK
    assert (figs / "regret_quantiles.png").exists()


def test_report_empty_directory_exits_2(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["report", "--dir", str(empty)]) == EXIT_CONFIG
    assert "no summary" in capsys.readouterr().err
