"""Command-line workflows, run in process through main()."""

import json

import numpy as np
import pytest

from her_reid import load_model
from her_reid.cli import main


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for var in ("HER_SEED", "HER_CONFIG", "HER_THREADS", "HER_LISTEN"):
        monkeypatch.delenv(var, raising=False)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def make_dataset(seed=3, identities=20, dim=8, prefix=""):
    assert run(
        "synth", "--identities", identities, "--dim", dim, "--noise", 0.3,
        "--out-probe", f"{prefix}p.herf", "--out-gallery", f"{prefix}g.herf",
        "--seed", seed,
    ) == 0
    return f"{prefix}p.herf", f"{prefix}g.herf"


def test_synth_fit_eval_round_trip(workdir, capsys):
    probe, gallery = make_dataset()
    assert run(
        "fit", "--features", f"{probe},{gallery}", "--lambda", 0.5,
        "--out", "m.herm", "--report", "fit.json",
    ) == 0
    out = capsys.readouterr().out
    assert "model written to m.herm" in out
    assert "relative residual" in out

    report = json.loads((workdir / "fit.json").read_text())
    assert report["samples"] == 40
    assert report["classes"] == 20
    assert report["dimension"] == 8
    assert report["lambda"] == 0.5
    assert report["residual"] < 1e-9
    assert report["kernel"] == "linear-primal"

    model = load_model("m.herm")
    assert model.class_count == 20

    assert run(
        "eval", "--model", "m.herm", "--probe", probe, "--gallery", gallery,
        "--ranks", "1,5", "--report", "eval.json",
    ) == 0
    out = capsys.readouterr().out
    assert "R1" in out and "R5" in out and "match%" in out
    scores = json.loads((workdir / "eval.json").read_text())
    assert scores["ranks"] == [1, 5]
    assert scores["probe_count"] == 20
    assert scores["rates"][0] > 0.9  # scored on its own training identities
    assert scores["rates"][1] >= scores["rates"][0]
    assert scores["curve"][-1] == 1.0


def test_fit_writes_identical_bytes_for_identical_inputs(workdir):
    probe, gallery = make_dataset()
    for name in ("a.herm", "b.herm"):
        assert run(
            "fit", "--features", f"{probe},{gallery}", "--lambda", 0.5, "--out", name
        ) == 0
    assert (workdir / "a.herm").read_bytes() == (workdir / "b.herm").read_bytes()


def test_fit_cross_validation_picks_sensible_ridge_weight(workdir, capsys):
    probe, gallery = make_dataset()
    assert run(
        "fit", "--features", f"{probe},{gallery}", "--cross-validate",
        "--lambda-grid", "0.01,0.1,1e8", "--out", "cv.herm", "--report", "cv.json",
    ) == 0
    assert "cross-validation selected ridge weight" in capsys.readouterr().out
    report = json.loads((workdir / "cv.json").read_text())
    rates = report["cross_validation"]
    assert len(rates) == 3
    assert report["lambda"] in (0.01, 0.1)
    assert rates[str(report["lambda"])] == max(rates.values())


def test_fit_default_report_sits_next_to_model(workdir):
    probe, gallery = make_dataset()
    assert run("fit", "--features", probe, "--lambda", 1.0, "--out", "q.herm") == 0
    assert (workdir / "q.herm.report.json").exists()
    assert run("fit", "--features", probe, "--lambda", 1.0) == 0
    assert (workdir / "fit.report.json").exists()


def test_fit_accepts_text_features(workdir):
    lines = ["# toy data"]
    rng = np.random.default_rng(0)
    for ident in (1, 2, 3):
        for view in ("probe", "gallery"):
            feats = " ".join(f"{v:.6f}" for v in rng.normal(size=4))
            lines.append(f"{ident} {view} {feats}")
    (workdir / "toy.txt").write_text("\n".join(lines) + "\n")
    assert run("fit", "--features", "toy.txt", "--lambda", 0.5, "--out", "t.herm") == 0
    assert load_model("t.herm").class_count == 3


def test_fit_kernel_model_refuses_binary_output(workdir, capsys):
    probe, gallery = make_dataset()
    assert run(
        "fit", "--features", f"{probe},{gallery}", "--lambda", 0.5,
        "--kernel", "rbf", "--out", "k.herm",
    ) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "kernel" in err

    assert run(
        "fit", "--features", f"{probe},{gallery}", "--lambda", 0.5,
        "--kernel", "rbf", "--report", "k.json",
    ) == 0
    report = json.loads((workdir / "k.json").read_text())
    assert report["kernel"] == "rbf"
    assert report["residual"] is None


def test_errors_exit_nonzero_with_one_line_diagnostic(workdir, capsys):
    assert run("fit", "--features", "absent.herf", "--lambda", 1.0) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert err.strip().count("\n") == 0
    assert "absent.herf" in err

    assert run("eval", "--model", "no.herm", "--probe", "x", "--gallery", "y") == 1
    assert capsys.readouterr().err.startswith("error:")


def test_seed_flag_position_does_not_matter(workdir):
    for seed_argv in (
        ["--seed", "4", "synth"],
        ["synth", "--seed", "4"],
    ):
        assert run(
            *seed_argv, "--identities", 6, "--dim", 4,
            "--out-probe", "s1.herf", "--out-gallery", "s2.herf",
        ) == 0
        data = (workdir / "s1.herf").read_bytes()
        if "first" not in locals():
            first = data
    assert data == first


def test_seed_env_variable(workdir, monkeypatch):
    make_dataset(seed=4, identities=6, dim=4, prefix="flag_")
    monkeypatch.setenv("HER_SEED", "4")
    assert run(
        "synth", "--identities", 6, "--dim", 4, "--noise", 0.3,
        "--out-probe", "env_p.herf", "--out-gallery", "env_g.herf",
    ) == 0
    assert (workdir / "env_p.herf").read_bytes() == (workdir / "flag_p.herf").read_bytes()


def test_config_file_supplies_defaults(workdir):
    probe, gallery = make_dataset()
    (workdir / "conf.json").write_text(json.dumps({
        "seed": 4,
        "fit": {"lam": 0.25, "out": "from_config.herm"},
    }))
    assert run("--config", "conf.json", "fit", "--features", f"{probe},{gallery}") == 0
    report = json.loads((workdir / "from_config.herm.report.json").read_text())
    assert report["lambda"] == 0.25

    # explicit flags beat the config
    assert run(
        "--config", "conf.json", "fit", "--features", probe,
        "--lambda", 2.0, "--out", "cli_wins.herm",
    ) == 0
    report = json.loads((workdir / "cli_wins.herm.report.json").read_text())
    assert report["lambda"] == 2.0


def test_config_env_variable(workdir, monkeypatch):
    probe, _ = make_dataset()
    (workdir / "conf.json").write_text(json.dumps({"fit": {"lam": 0.75}}))
    monkeypatch.setenv("HER_CONFIG", str(workdir / "conf.json"))
    assert run("fit", "--features", probe, "--out", "envconf.herm") == 0
    report = json.loads((workdir / "envconf.herm.report.json").read_text())
    assert report["lambda"] == 0.75


def test_config_file_errors(workdir, capsys):
    assert run("--config", "missing.json", "synth") == 1
    assert "config file not found" in capsys.readouterr().err
    (workdir / "bad.json").write_text("[1, 2]")
    assert run("--config", "bad.json", "synth") == 1
    assert "JSON object" in capsys.readouterr().err
    (workdir / "broken.json").write_text("{nope")
    assert run("--config", "broken.json", "synth") == 1
    assert capsys.readouterr().err.startswith("error:")


def test_update_applies_batch_and_reports(workdir, capsys):
    probe, gallery = make_dataset()
    assert run(
        "fit", "--features", f"{probe},{gallery}", "--lambda", 0.5,
        "--out", "m.herm", "--incremental",
    ) == 0
    # a second draw over a subset of the same identity ids: pure class growth
    p2, g2 = make_dataset(seed=11, identities=5, dim=8, prefix="b_")
    capsys.readouterr()
    assert run(
        "update", "--model", "m.herm", "--batch", f"{p2},{g2}",
        "--out", "m2.herm", "--report", "up.json",
    ) == 0
    out = capsys.readouterr().out
    assert "samples applied" in out and "stale classes" in out

    report = json.loads((workdir / "up.json").read_text())
    assert report["samples_applied"] == 10
    assert report["classes_added"] == 0
    assert report["path"] in ("scalar-sequential", "chunk-woodbury")
    assert report["model_path"] == "m2.herm"
    # the saved model does not carry class sizes, so re-absorbed identities
    # are flagged rather than silently renormalized
    assert report["stale_class_ids"] == [1, 2, 3, 4, 5]
    assert load_model("m2.herm").class_count == 20

    # without --out the model file is rewritten in place
    before = (workdir / "m.herm").read_bytes()
    assert run("update", "--model", "m.herm", "--batch", f"{p2},{g2}") == 0
    assert (workdir / "m.herm").read_bytes() != before


def test_update_scalar_threshold_switches_path(workdir):
    probe, gallery = make_dataset(identities=8, dim=6)
    assert run(
        "fit", "--features", f"{probe},{gallery}", "--lambda", 0.5,
        "--out", "m.herm", "--incremental",
    ) == 0
    p2, g2 = make_dataset(seed=11, identities=3, dim=6, prefix="b_")
    for threshold, expected in ((100, "scalar-sequential"), (1, "chunk-woodbury")):
        assert run(
            "update", "--model", "m.herm", "--batch", f"{p2},{g2}",
            "--scalar-threshold", threshold,
            "--out", f"u{threshold}.herm", "--report", f"u{threshold}.json",
        ) == 0
        report = json.loads((workdir / f"u{threshold}.json").read_text())
        assert report["path"] == expected
        assert report["stale_class_ids"] == [1, 2, 3]  # absorbed sizes unknown
    # both paths land on the same model up to solver round-off
    a, b = load_model("u100.herm"), load_model("u1.herm")
    assert a.class_ids == b.class_ids
    gap = np.linalg.norm(a.projection - b.projection)
    assert gap <= 1e-9 * (np.linalg.norm(b.projection) + 1)


def test_active_sim_reports_policy_table(workdir, capsys):
    assert run(
        "active-sim", "--synthetic", json.dumps({"identities": 10, "dim": 4, "noise": 0.4}),
        "--policies", "random", "--budgets", "50,100", "--trials", 2,
        "--lambda", 0.2, "--seed", 1, "--report", "sim.json",
    ) == 0
    out = capsys.readouterr().out
    assert "mean top-1 match rate by labeling budget" in out
    assert "50%" in out and "100%" in out

    report = json.loads((workdir / "sim.json").read_text())
    assert report["budgets"] == [50, 100]
    assert report["trials"] == 2
    random_policy = report["policies"]["random"]
    assert len(random_policy["mean_rank1"]) == 2
    assert len(random_policy["per_trial_rank1"]["50"]) == 2
    assert all(0.0 <= v <= 1.0 for v in random_policy["mean_rank1"])


def test_active_sim_validates_budgets(workdir, capsys):
    assert run(
        "active-sim", "--synthetic", json.dumps({"identities": 6, "dim": 4}),
        "--budgets", "0,50",
    ) == 1
    assert "budgets are percentages" in capsys.readouterr().err


def test_bench_times_update_against_refit(workdir, capsys):
    assert run(
        "bench", "--grid", "16x40", "--update-reps", 2, "--refit-reps", 2,
        "--report", "bench.json",
    ) == 0
    out = capsys.readouterr().out
    assert "update ms" in out and "speedup" in out
    rows = json.loads((workdir / "bench.json").read_text())
    assert len(rows) == 1
    assert rows[0]["dim"] == 16 and rows[0]["samples"] == 40
    assert rows[0]["update_median_seconds"] > 0
    assert rows[0]["speedup"] > 0


def test_serve_rejects_malformed_listen(workdir, capsys):
    assert run("serve", "--listen", "nohost") == 1
    assert "--listen expects host:port" in capsys.readouterr().err
    assert run("serve", "--listen", "host:badport") == 1
    assert capsys.readouterr().err.startswith("error:")


def test_thread_count_validation(workdir, capsys):
    assert run("--threads", "0", "synth", "--identities", 4, "--dim", 2) == 1
    assert "--threads must be >= 1" in capsys.readouterr().err
    assert run(
        "--threads", "2", "synth", "--identities", 4, "--dim", 2,
        "--out-probe", "tp.herf", "--out-gallery", "tg.herf",
    ) == 0
