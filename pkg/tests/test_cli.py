from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from shared.src import cli
from shared.src.common_io import read_json, read_tensor, write_tensor
from shared.src.config import RunConfig
from shared.src.toy_data import mixture2d

TWO_CLASS = mixture2d().to_spec()


def _run(command: str, out, **overrides) -> int:
    return cli.run(command, RunConfig.from_dict(overrides), out)


def test_schedule_command_writes_table(tmp_path) -> None:
    assert _run("schedule", tmp_path) == cli.EXIT_OK
    table = pd.read_csv(tmp_path / "schedule.csv")
    assert len(table) == 256
    assert read_json(tmp_path / "metrics.json")["pass"] is True


def test_ve_schedule_has_zero_beta(tmp_path) -> None:
    assert _run("schedule", tmp_path, relation="ve") == cli.EXIT_OK
    assert (pd.read_csv(tmp_path / "schedule.csv")["beta"] == 0.0).all()


def test_malformed_config_exits_with_input_error(tmp_path) -> None:
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"relation": "vpp"}), encoding="utf-8")
    assert cli.main(["schedule", "--config", str(config), "--out", str(tmp_path / "out")]) == cli.EXIT_INPUT


def test_wrongly_typed_config_exits_with_input_error(tmp_path) -> None:
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"steps": "ten"}), encoding="utf-8")
    assert cli.main(["sample", "--config", str(config), "--out", str(tmp_path / "out")]) == cli.EXIT_INPUT
    assert not (tmp_path / "out" / "samples.crsh").exists()


def test_sample_is_reproducible_and_accurate(tmp_path) -> None:
    assert _run("sample", tmp_path / "a", batch=10_000, seed=7) == cli.EXIT_OK
    assert _run("sample", tmp_path / "b", batch=10_000, seed=7) == cli.EXIT_OK
    a = (tmp_path / "a" / "samples.crsh").read_bytes()
    assert a == (tmp_path / "b" / "samples.crsh").read_bytes()
    assert read_json(tmp_path / "a" / "metrics.json")["w2_to_truth"] <= 0.07


def test_ddim_fifty_steps(tmp_path) -> None:
    assert _run("sample", tmp_path, batch=10_000, seed=7, method="ddim", steps=50) == cli.EXIT_OK
    assert read_json(tmp_path / "metrics.json")["w2_to_truth"] <= 0.10


def test_chunking_is_part_of_the_seed_contract(tmp_path) -> None:
    _run("sample", tmp_path / "a", batch=300, chunk=100, seed=1, steps=20)
    _run("sample", tmp_path / "b", batch=300, chunk=100, seed=1, steps=20)
    _run("sample", tmp_path / "c", batch=300, chunk=300, seed=1, steps=20)
    a = read_tensor(tmp_path / "a" / "samples.crsh")
    np.testing.assert_array_equal(a, read_tensor(tmp_path / "b" / "samples.crsh"))
    assert a.shape == (300, 1)
    assert not np.array_equal(a, read_tensor(tmp_path / "c" / "samples.crsh"))


def test_manifest_reproduces_the_run(tmp_path) -> None:
    assert _run("sample", tmp_path / "a", batch=50, seed=4, steps=30, method="ode") == cli.EXIT_OK
    manifest = tmp_path / "a" / "manifest.json"
    assert cli.main(["sample", "--config", str(manifest), "--out", str(tmp_path / "b")]) == cli.EXIT_OK
    assert (tmp_path / "a" / "samples.crsh").read_bytes() == (tmp_path / "b" / "samples.crsh").read_bytes()


def test_encode_round_trip(tmp_path) -> None:
    write_tensor(tmp_path / "x.crsh", np.array([[2.5, 3.5], [-3.0, -2.0]]))
    code = _run("encode", tmp_path / "out", mixture=TWO_CLASS, input=str(tmp_path / "x.crsh"))
    assert code == cli.EXIT_OK
    assert read_tensor(tmp_path / "out" / "latents.crsh").shape == (2, 2)
    assert read_json(tmp_path / "out" / "metrics.json")["round_trip_error"] <= 1e-3


def test_inpaint_full_mask_returns_input(tmp_path) -> None:
    x = np.array([1.25, -0.75], dtype=np.float32)
    write_tensor(tmp_path / "x.crsh", x)
    write_tensor(tmp_path / "mask.crsh", np.ones(2))
    code = _run(
        "inpaint", tmp_path / "out", mixture=TWO_CLASS, batch=20, steps=40,
        input=str(tmp_path / "x.crsh"), mask=str(tmp_path / "mask.crsh"),
    )
    assert code == cli.EXIT_OK
    out = read_tensor(tmp_path / "out" / "inpainted.crsh")
    np.testing.assert_array_equal(out, np.broadcast_to(x, (20, 2)))
    assert read_json(tmp_path / "out" / "metrics.json")["max_fixed_deviation"] == 0.0


def test_inpaint_mask_shape_mismatch(tmp_path) -> None:
    write_tensor(tmp_path / "x.crsh", np.zeros(2))
    write_tensor(tmp_path / "mask.crsh", np.ones(3))
    code = _run(
        "inpaint", tmp_path / "out", mixture=TWO_CLASS,
        input=str(tmp_path / "x.crsh"), mask=str(tmp_path / "mask.crsh"),
    )
    assert code == cli.EXIT_INPUT


def test_missing_input_file(tmp_path) -> None:
    assert _run("variations", tmp_path / "out", input=str(tmp_path / "absent.crsh")) == cli.EXIT_INPUT


def test_interp_modes(tmp_path) -> None:
    write_tensor(tmp_path / "x1.crsh", np.array([[3.0, 3.0]]))
    write_tensor(tmp_path / "x2.crsh", np.array([[-3.0, -3.0]]))
    common = {"mixture": TWO_CLASS, "input": str(tmp_path / "x1.crsh"), "input2": str(tmp_path / "x2.crsh")}
    assert _run("interp", tmp_path / "latent", **common) == cli.EXIT_OK
    assert read_json(tmp_path / "latent" / "metrics.json")["mode"] == "latent"
    assert _run("interp", tmp_path / "mid", t_mid=0.5, steps=50, **common) == cli.EXIT_OK
    assert read_tensor(tmp_path / "mid" / "interp.crsh").shape == (1, 2)


def test_variations_stay_near_input_at_low_noise(tmp_path) -> None:
    write_tensor(tmp_path / "x.crsh", np.array([3.0, 3.0]))
    code = _run(
        "variations", tmp_path / "out", mixture=TWO_CLASS, batch=10, t_level=0.01, input=str(tmp_path / "x.crsh")
    )
    assert code == cli.EXIT_OK
    assert read_json(tmp_path / "out" / "metrics.json")["mean_relative_distance"] <= 0.05


def test_one_hot_mix_matches_single_class(tmp_path) -> None:
    common = {"mixture": TWO_CLASS, "batch": 200, "steps": 100, "seed": 3}
    assert _run("guide", tmp_path / "mix", classes=[0, 1], class_weights=[1.0, 0.0], **common) == cli.EXIT_OK
    assert _run("guide", tmp_path / "one", classes=[0], class_weights=[1.0], **common) == cli.EXIT_OK
    assert (tmp_path / "mix" / "guided.crsh").read_bytes() == (tmp_path / "one" / "guided.crsh").read_bytes()
    metrics = read_json(tmp_path / "mix" / "metrics.json")
    assert metrics["class_shares"]["0"] >= 0.95
    assert metrics["records"][0]["pass"] is True


def test_guide_rejects_unknown_label(tmp_path) -> None:
    code = _run("guide", tmp_path, mixture=TWO_CLASS, classes=[0, 5], class_weights=[0.5, 0.5])
    assert code == cli.EXIT_INPUT


def test_guide_rejects_bad_weights(tmp_path) -> None:
    code = _run("guide", tmp_path, mixture=TWO_CLASS, classes=[0, 1], class_weights=[0.7, 0.7])
    assert code == cli.EXIT_INPUT


def test_train_with_zero_epochs_saves_initialization(tmp_path) -> None:
    code = _run("train", tmp_path, epochs=0, n_data=50, hidden=[8], seed=2)
    assert code == cli.EXIT_OK
    assert (tmp_path / "net.crsh").read_bytes() == (tmp_path / "net_ema.crsh").read_bytes()
    assert read_json(tmp_path / "metrics.json")["final_loss"] is None


def test_trained_checkpoint_drives_sampling(tmp_path) -> None:
    assert _run("train", tmp_path / "train", epochs=1, n_data=64, batch_size=32, hidden=[8]) == cli.EXIT_OK
    checkpoint = str(tmp_path / "train" / "net_ema.crsh")
    code = _run("sample", tmp_path / "sample", model="checkpoint", checkpoint=checkpoint, batch=5, steps=10)
    assert code == cli.EXIT_OK
    assert read_tensor(tmp_path / "sample" / "samples.crsh").shape == (5, 2)


def test_train_clf_writes_checkpoint(tmp_path) -> None:
    code = _run("train-clf", tmp_path, epochs=1, n_data=100, batch_size=40, hidden=[8])
    assert code == cli.EXIT_OK
    assert (tmp_path / "classifier.crsh").exists()
    assert "heldout_accuracy_sigma_0.1" in read_json(tmp_path / "metrics.json")


def test_non_finite_output_exits_with_code_three(tmp_path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(cli, "sample", lambda eps_fn, cfg, rng, shape: np.full(shape, np.nan))
    assert _run("sample", tmp_path, batch=4) == cli.EXIT_NON_FINITE
    assert not (tmp_path / "samples.crsh").exists()
