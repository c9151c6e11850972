import os

import numpy as np
import pytest

from qclab import cli
from qclab.datasets import Dataset, load_cache, read_pgm, save_cache
from qclab.cli import (
    Checkpoint,
    Config,
    ConfigError,
    load_checkpoint,
    load_config,
    resolve_threads,
    save_checkpoint,
    stage_seed,
)

CSV_HEADER = (
    "phase,step,loss,accuracy,fidelity,task_a_accuracy,task_b_accuracy,"
    "task_a_fidelity,task_b_fidelity,task_a_loss,task_b_loss"
)


def _make_qdst(dirpath, tag, n, seed):
    rng = np.random.default_rng(seed)
    ds = Dataset.from_raw(rng.uniform(0.05, 0.95, (n, 16)), rng.integers(0, 2, n), tag)
    path = dirpath / f"{tag}.qdst"
    save_cache(ds, path)
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny two-task corpus plus a config file for a 4-qubit model."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    data.mkdir()
    paths = {
        "a_train": _make_qdst(data, "a_train", 12, 1),
        "a_test": _make_qdst(data, "a_test", 6, 2),
        "b_train": _make_qdst(data, "b_train", 12, 3),
        "b_test": _make_qdst(data, "b_test", 6, 4),
    }
    cfg = root / "exp.conf"
    cfg.write_text(
        "# tiny smoke experiment\n"
        "experiment.arch = fully_connected\n"
        "experiment.n_qubits = 4\n"
        "experiment.depth = 1\n"
        "experiment.seed = 7\n"
        f"task_a.kind = qdst\n"
        f"task_a.train = {paths['a_train']}\n"
        f"task_a.test = {paths['a_test']}\n"
        f"task_b.kind = qdst\n"
        f"task_b.train = {paths['b_train']}\n"
        f"task_b.test = {paths['b_test']}\n"
        "train_a.epochs = 2\n"
        "train_a.batch_size = 4\n"
        "train_a.learning_rate = 0.05\n"
        "train_b.epochs = 2\n"
        "train_b.batch_size = 4\n"
        "train_b.learning_rate = 0.05\n"
        "ewc.lambda = 10\n"
        "attack.epsilon_total = 0.1\n"
        "attack.iterations = 3\n"
    )
    return root, cfg, paths


@pytest.fixture(scope="module")
def trained(workspace):
    root, cfg, _ = workspace
    out = root / "run_train"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def continued(workspace, trained):
    root, cfg, _ = workspace
    out = root / "run_continual"
    rc = cli.main([
        "continual", "--config", str(cfg), "--out", str(out),
        "--checkpoint", str(trained / "checkpoint_a.qadv"),
    ])
    assert rc == 0
    return out


# ---------------------------------------------------------------------------
# config parsing and seeds
# ---------------------------------------------------------------------------

def test_config_parsing(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("# comment\n\na.b = 1\n c.d= hello world \n")
    cfg = load_config(p)
    assert cfg.get_int("a.b") == 1
    assert cfg.get("c.d") == "hello world"
    assert cfg.get("missing") is None
    with pytest.raises(ConfigError):
        cfg.require("missing")
    p.write_text("no equals sign\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_bool_parsing(tmp_path):
    p = tmp_path / "b.conf"
    p.write_text("x.t = true\nx.f = 0\nx.bad = maybe\n")
    cfg = load_config(p)
    assert cfg.get_bool("x.t") is True
    assert cfg.get_bool("x.f") is False
    assert cfg.get_bool("x.missing", True) is True
    with pytest.raises(ConfigError):
        cfg.get_bool("x.bad")


def test_stage_seed_separates_streams():
    seeds = {stage_seed(7, s) for s in ("init_a", "train_a", "train_b", "spt")}
    assert len(seeds) == 4
    assert stage_seed(7, "init_a") == stage_seed(7, "init_a")
    assert stage_seed(8, "init_a") != stage_seed(7, "init_a")


def test_resolve_threads(tmp_path, monkeypatch):
    p = tmp_path / "t.conf"
    p.write_text("experiment.threads = 3\n")
    assert resolve_threads(load_config(p)) == 3
    p.write_text("x.y = 1\n")
    monkeypatch.setenv("QCLAB_THREADS", "2")
    assert resolve_threads(load_config(p)) == 2
    monkeypatch.delenv("QCLAB_THREADS")
    assert resolve_threads(load_config(p)) == 1
    monkeypatch.setenv("QCLAB_THREADS", "zero")
    with pytest.raises(ConfigError):
        resolve_threads(load_config(p))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    ckpt = Checkpoint(
        metadata={"seed": 1, "architecture": "qcnn"},
        theta=rng.standard_normal(9),
        theta_a=rng.standard_normal(9),
        fisher=rng.uniform(0, 2, 9),
    )
    p = tmp_path / "x.qadv"
    save_checkpoint(ckpt, p)
    back = load_checkpoint(p)
    assert back.metadata == ckpt.metadata
    assert np.array_equal(back.theta, ckpt.theta)
    assert np.array_equal(back.theta_a, ckpt.theta_a)
    assert np.array_equal(back.fisher, ckpt.fisher)
    # rewrite is byte-identical (sorted JSON keys)
    p2 = tmp_path / "y.qadv"
    save_checkpoint(ckpt, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.qadv"
    p.write_bytes(b"WHAT" + b"\x00" * 20)
    from qclab.datasets import FormatError

    with pytest.raises(FormatError):
        load_checkpoint(p)


# ---------------------------------------------------------------------------
# pipeline commands
# ---------------------------------------------------------------------------

def test_train_outputs(trained):
    csv = (trained / "train_a.csv").read_text().splitlines()
    assert csv[0] == CSV_HEADER
    assert len(csv) == 1 + 2 + 1  # header + 2 epochs + test row
    assert csv[-1].startswith("test_a,")
    ckpt = load_checkpoint(trained / "checkpoint_a.qadv")
    assert ckpt.theta.shape == (12,)  # 3 * 4 qubits * depth 1
    assert ckpt.metadata["architecture"] == "fully_connected"
    assert ckpt.metadata["seed"] == 7
    assert (trained / "exp.conf").exists()  # config copied alongside results


def test_train_rerun_is_byte_identical(workspace, trained):
    root, cfg, _ = workspace
    out2 = root / "run_train_again"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out2 / "train_a.csv").read_bytes() == (trained / "train_a.csv").read_bytes()
    assert (
        (out2 / "checkpoint_a.qadv").read_bytes()
        == (trained / "checkpoint_a.qadv").read_bytes()
    )


def test_seed_flag_overrides_config(workspace, trained):
    root, cfg, _ = workspace
    out2 = root / "run_train_seed9"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out2), "--seed", "9"]) == 0
    a = load_checkpoint(trained / "checkpoint_a.qadv")
    b = load_checkpoint(out2 / "checkpoint_a.qadv")
    assert not np.array_equal(a.theta, b.theta)
    assert b.metadata["seed"] == 9


def test_continual_outputs(continued):
    csv = (continued / "continual.csv").read_text().splitlines()
    assert csv[0] == CSV_HEADER
    assert len(csv) == 1 + 2  # header + one row per epoch
    first = csv[1].split(",")
    assert first[0] == "continual"
    assert all(first[i] != "" for i in range(5, 11))  # per-task columns filled
    ckpt = load_checkpoint(continued / "checkpoint_merged.qadv")
    assert ckpt.theta_a is not None and ckpt.fisher is not None
    assert ckpt.metadata["ewc_lambda"] == 10.0
    assert np.all(ckpt.fisher >= 0)


def test_attack_outputs(workspace, continued):
    root, cfg, _ = workspace
    out = root / "run_attack"
    rc = cli.main([
        "attack", "--config", str(cfg), "--out", str(out),
        "--checkpoint", str(continued / "checkpoint_merged.qadv"),
    ])
    assert rc == 0
    csv = (out / "attack.csv").read_text().splitlines()
    assert csv[0] == CSV_HEADER
    assert len(csv) == 1 + 1 + 3  # header + baseline + 3 iterations
    assert csv[1].split(",")[1] == "0"  # baseline row is step 0
    adv = load_cache(out / "adversarial_a.qdst")
    assert len(adv) == 6
    np.testing.assert_allclose(np.linalg.norm(adv.states, axis=1), 1.0, atol=1e-12)
    images = sorted((out / "images").glob("*.pgm"))
    assert len(images) == 4  # orig/adv pair per task
    img = read_pgm(images[0])
    assert img.shape == (4, 4)  # 16 pixels for the 4-qubit model


def test_zero_epsilon_attack_is_inert(workspace, trained, tmp_path):
    root, cfg, _ = workspace
    zero_cfg = tmp_path / "zero.conf"
    zero_cfg.write_text(
        cfg.read_text().replace("attack.epsilon_total = 0.1", "attack.epsilon_total = 0")
    )
    out = tmp_path / "run_attack_zero"
    rc = cli.main([
        "attack", "--config", str(zero_cfg), "--out", str(out),
        "--checkpoint", str(trained / "checkpoint_a.qadv"),
    ])
    assert rc == 0
    rows = (out / "attack.csv").read_text().splitlines()[1:]
    accs = {r.split(",")[3] for r in rows}
    fids = {r.split(",")[4] for r in rows}
    assert len(accs) == 1  # accuracy never moves
    assert fids == {"1"}


def test_eval_command(workspace, trained):
    root, cfg, _ = workspace
    out = root / "run_eval"
    rc = cli.main([
        "eval", "--config", str(cfg), "--out", str(out),
        "--checkpoint", str(trained / "checkpoint_a.qadv"),
    ])
    assert rc == 0
    csv = (out / "eval.csv").read_text().splitlines()
    assert len(csv) == 3  # header + both tasks
    assert csv[1].startswith("eval_task_a,")


def test_gen_spt_command(tmp_path):
    cfg = tmp_path / "spt.conf"
    cfg.write_text(
        "spt.n_sites = 4\nspt.lambda_step = 0.05\nspt.n_train = 3\nspt.n_test = 1\n"
    )
    out = tmp_path / "spt_out"
    assert cli.main(["gen-spt", "--config", str(cfg), "--out", str(out)]) == 0
    train = load_cache(out / "spt_train.qdst")
    test = load_cache(out / "spt_test.qdst")
    assert len(train) == 6 and len(test) == 2
    assert train.raw is None


def test_export_images_command(workspace, tmp_path):
    _make = _make_qdst(tmp_path, "orig", 4, 11)
    adv = _make_qdst(tmp_path, "adv", 4, 12)
    cfg = tmp_path / "exp.conf"
    cfg.write_text(
        f"export.original = {_make}\nexport.adversarial = {adv}\nexport.indices = 0,2\n"
    )
    out = tmp_path / "imgs"
    assert cli.main(["export-images", "--config", str(cfg), "--out", str(out)]) == 0
    files = sorted((out / "images").glob("*.pgm"))
    assert [f.name for f in files] == [
        "sample0_adv.pgm", "sample0_orig.pgm", "sample2_adv.pgm", "sample2_orig.pgm",
    ]


# ---------------------------------------------------------------------------
# failure modes exit non-zero without partial outputs
# ---------------------------------------------------------------------------

def test_missing_dataset_file_fails_cleanly(workspace, tmp_path, capsys):
    root, cfg, _ = workspace
    bad = tmp_path / "bad.conf"
    bad.write_text(
        "experiment.n_qubits = 4\nexperiment.depth = 1\n"
        "task_a.kind = qdst\ntask_a.train = /nonexistent.qdst\ntask_a.test = /nonexistent.qdst\n"
    )
    out = tmp_path / "never"
    rc = cli.main(["train", "--config", str(bad), "--out", str(out)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
    assert not (out / "checkpoint_a.qadv").exists()


def test_missing_config_key_fails(tmp_path, capsys):
    bad = tmp_path / "empty.conf"
    bad.write_text("experiment.n_qubits = 4\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_bad_checkpoint_fails(workspace, tmp_path):
    root, cfg, _ = workspace
    junk = tmp_path / "junk.qadv"
    junk.write_bytes(b"JUNKJUNK")
    rc = cli.main([
        "eval", "--config", str(cfg), "--out", str(tmp_path / "o"),
        "--checkpoint", str(junk),
    ])
    assert rc == 1


def test_unknown_architecture_fails(workspace, tmp_path):
    root, cfg, _ = workspace
    bad = tmp_path / "arch.conf"
    bad.write_text(cfg.read_text().replace("fully_connected", "perceptron"))
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
