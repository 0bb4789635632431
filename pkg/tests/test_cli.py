"""Command-line plumbing: artifacts, byte-identical reruns, config
precedence, exit codes."""

import json

import numpy as np
import pytest

from sgm.cli import main
from sgm.datagen import ring, save_samples, two_moons


def run(argv):
    return main([str(a) for a in argv])


def read_bytes(path):
    return path.read_bytes()


def small_train_flags():
    return ["--n-components", 4, "--batch", 8, "--steps", 25, "--lr", 0.05,
            "--seed", 0]


@pytest.fixture(scope="module")
def planar_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("planar")
    assert run(["gen-data", "--recipe", "planar", "--seed", 3,
                "--n-samples", 400, "--out", out]) == 0
    return out


def test_gen_data_artifacts_and_rerun(planar_dir, tmp_path):
    names = ["samples.csv", "spec.json", "manifest.json"]
    for name in names:
        assert (planar_dir / name).exists()
    again = tmp_path / "again"
    assert run(["gen-data", "--recipe", "planar", "--seed", 3,
                "--n-samples", 400, "--out", again]) == 0
    for name in names:
        assert read_bytes(planar_dir / name) == read_bytes(again / name), name
    manifest = json.loads((planar_dir / "manifest.json").read_text())
    assert manifest["command"] == "gen-data"
    assert manifest["config"]["seed"] == 3
    assert set(manifest["versions"]) == {"python", "numpy", "scipy", "sgm"}


def test_gen_data_chain_recipe(tmp_path):
    out = tmp_path / "chain"
    assert run(["gen-data", "--recipe", "chain", "--seed", 1, "--out", out]) == 0
    spec = json.loads((out / "spec.json").read_text())
    assert spec["type"] == "chain"
    head = (out / "samples.csv").read_text().splitlines()
    assert head[0] == "x0,x1"


def test_train_density_artifacts_and_rerun(planar_dir, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    argv = ["train-density", "--data", planar_dir / "samples.csv",
            "--material-draws", 5] + small_train_flags()
    assert run(argv + ["--out", out1]) == 0
    assert run(argv + ["--out", out2]) == 0
    names = ["telemetry.csv", "model.ckpt", "mixture.json",
             "density_grid.csv", "summary.json", "manifest.json"]
    for name in names:
        assert (out1 / name).exists(), name
        assert read_bytes(out1 / name) == read_bytes(out2 / name), name
    summary = json.loads((out1 / "summary.json").read_text())
    assert summary["mode"] == "density" and summary["steps"] == 25
    assert np.isfinite(summary["J"]) and np.isfinite(summary["H2"])
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert len(manifest["inputs"]) == 1
    digest = next(iter(manifest["inputs"].values()))
    assert len(digest) == 64


def test_config_file_with_flag_override(planar_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"steps": 40, "lr": 0.02, "n_components": 4,
                               "batch": 8, "seed": 5}))
    out = tmp_path / "out"
    assert run(["train-density", "--data", planar_dir / "samples.csv",
                "--config", cfg, "--steps", 10, "--out", out]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["steps"] == 10      # flag wins
    assert manifest["config"]["lr"] == 0.02       # file fills the rest
    assert manifest["config"]["seed"] == 5
    telemetry = (out / "telemetry.csv").read_text().splitlines()
    assert len(telemetry) == 1 + 10


def test_bad_config_file_is_usage_error(planar_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"step": 10}))  # typo'd field
    assert run(["train-density", "--data", planar_dir / "samples.csv",
                "--config", cfg, "--out", tmp_path / "x"]) == 1
    assert "unknown config fields" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert run(["train-density", "--data", planar_dir / "samples.csv",
                "--config", cfg, "--out", tmp_path / "y"]) == 1


def test_estimate_mi_artifacts(tmp_path):
    rng = np.random.default_rng(0)
    data = tmp_path / "pairs.csv"
    save_samples(data, rng.normal(size=(300, 2)))
    out = tmp_path / "mi"
    assert run(["estimate-mi", "--data", data, "--out", out,
                "--material-draws", 5] + small_train_flags()) == 0
    mi = json.loads((out / "mi.json").read_text())
    assert set(mi) == {"qmi_sgm", "renyi_mi_ratio", "iq_hat"}
    assert all(np.isfinite(v) for v in mi.values())


def test_train_conditional_artifacts(tmp_path):
    rng = np.random.default_rng(1)
    data = tmp_path / "pairs.csv"
    save_samples(data, rng.normal(size=(400, 2)))
    out = tmp_path / "cond"
    assert run(["train-conditional", "--data", data, "--out", out]
               + small_train_flags()) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "conditional"
    assert np.isfinite(summary["H2"])


def test_train_gan2d_artifacts(tmp_path):
    rng = np.random.default_rng(2)
    data, probe = tmp_path / "moons.csv", tmp_path / "ring.csv"
    save_samples(data, two_moons(400, rng))
    save_samples(probe, ring(100, rng))
    out = tmp_path / "gan"
    # gentle lr: a hot generator collapses into a tanh corner within a few
    # steps and the smoke run would warn
    assert run(["train-gan2d", "--data", data, "--ood", probe, "--out", out,
                "--steps", 8, "--disc-steps", 2, "--batch", 8, "--lr", 0.01,
                "--n-components", 4, "--seed", 0]) == 0
    for name in ["disc_telemetry.csv", "disc_model.ckpt", "gen_telemetry.csv",
                 "gen_model.ckpt", "summary.json", "manifest.json"]:
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert 0.0 <= summary["auroc"] <= 1.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["inputs"]) == 2


def test_eval_on_mixture_and_on_checkpoint(planar_dir, tmp_path):
    train_out = tmp_path / "fit"
    assert run(["train-density", "--data", planar_dir / "samples.csv",
                "--out", train_out] + small_train_flags()) == 0
    for model in [train_out / "mixture.json", train_out / "model.ckpt"]:
        out = tmp_path / f"eval_{model.suffix.lstrip('.')}"
        assert run(["eval", "--model", model, "--data", planar_dir / "samples.csv",
                    "--centers", planar_dir / "spec.json",
                    "--material-draws", 5, "--out", out]) == 0
        report = json.loads((out / "eval.json").read_text())
        assert set(report) == {"ce", "vr_tight", "vr_loose", "h2", "notes"}
        assert 0.0 <= report["vr_tight"] <= report["vr_loose"] <= 1.0
        assert np.isfinite(report["ce"])


def test_oracle_h2_and_qmi(planar_dir, tmp_path):
    out = tmp_path / "oracle_h2"
    assert run(["oracle", "--spec", planar_dir / "spec.json", "--quantity", "h2",
                "--resolution", 3001, "--out", out]) == 0
    rep = json.loads((out / "oracle.json").read_text())
    assert rep["h2_rel_err"] < 1e-4
    assert rep["h2_quadrature"] == pytest.approx(-np.log(rep["norm_quadrature"]))

    out2 = tmp_path / "oracle_qmi"
    assert run(["oracle", "--spec", planar_dir / "spec.json", "--quantity", "qmi",
                "--resolution", 2001, "--out", out2]) == 0
    rep2 = json.loads((out2 / "oracle.json").read_text())
    assert np.isfinite(rep2["qmi_closed_bits"]) and np.isfinite(rep2["d2_half_bits"])
    print(f"qmi {rep2['qmi_closed_bits']:.4f} bits, "
          f"half-D2 {rep2['d2_half_bits']:.4f} bits")


def test_oracle_cond_norm(tmp_path):
    chain = tmp_path / "chain"
    assert run(["gen-data", "--recipe", "chain", "--seed", 2, "--out", chain]) == 0
    out = tmp_path / "oracle_cond"
    assert run(["oracle", "--spec", chain / "spec.json", "--quantity", "cond-norm",
                "--resolution", 1501, "--out", out]) == 0
    rep = json.loads((out / "oracle.json").read_text())
    assert rep["h2_cond_quadrature"] == pytest.approx(-np.log(rep["cond_norm_quadrature"]))
    # ten tight emission kernels: the conditional norm is far above 1
    assert rep["cond_norm_quadrature"] > 1.0


def test_exit_codes(planar_dir, tmp_path, capsys):
    # missing required flag
    assert run(["train-density", "--out", tmp_path / "x"]) == 1
    # bad enum value
    assert run(["gen-data", "--recipe", "gauss", "--out", tmp_path / "y"]) == 1
    # nonexistent data file
    assert run(["train-density", "--data", tmp_path / "nope.csv",
                "--out", tmp_path / "z"]) == 1
    capsys.readouterr()
    # numerical failure: an absurd learning rate diverges, exit 2
    assert run(["train-density", "--data", planar_dir / "samples.csv",
                "--out", tmp_path / "w", "--lr", 1e14, "--steps", 300,
                "--n-components", 4, "--batch", 8]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    from sgm import __version__

    assert __version__ in capsys.readouterr().out
