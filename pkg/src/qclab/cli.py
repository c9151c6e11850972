"""Command-line pipeline: train / continual / attack / gen-spt / eval /
export-images, driven by flat key-value config files.

Config format: one `section.key = value` per line, `#` comments. Every run
copies its config into the output directory, derives all randomness from the
single experiment seed via per-stage stream splitting, and emits CSVs with a
fixed schema rendered at 17 significant digits so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import struct
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import continual as continual_mod
from . import datasets as ds
from . import training as training_mod
from .circuit import Architecture, CircuitModel, build_fully_connected, build_qcnn, init_params

CHECKPOINT_MAGIC = b"QADV"
CHECKPOINT_VERSION = 1

CSV_COLUMNS = (
    "phase,step,loss,accuracy,fidelity,task_a_accuracy,task_b_accuracy,"
    "task_a_fidelity,task_b_fidelity,task_a_loss,task_b_loss"
)


class ConfigError(ValueError):
    pass


def resolve_threads(cfg: "Config") -> int:
    """Worker-thread bound: `experiment.threads` key, QCLAB_THREADS fallback."""
    v = cfg.get("experiment.threads") or os.environ.get("QCLAB_THREADS")
    if v is None:
        return 1
    try:
        n = int(v)
    except ValueError:
        raise ConfigError(f"threads: not an integer: {v}")
    if n < 1:
        raise ConfigError(f"threads: must be >= 1, got {n}")
    return n


def _apply_thread_limit(n: int) -> None:
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:  # pragma: no cover
        pass


def stage_seed(seed: int, stage: str) -> int:
    """Split the experiment seed into a per-stage stream (crc32 of the name)."""
    return (int(seed) << 32) | zlib.crc32(stage.encode())


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

@dataclass
class Config:
    values: dict[str, str]
    path: Path

    def get(self, key: str, default=None) -> str | None:
        return self.values.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing config key {key}")
        return self.values[key]

    def get_int(self, key: str, default: int | None = None) -> int:
        v = self.get(key)
        return default if v is None else int(v)

    def get_float(self, key: str, default: float | None = None) -> float:
        v = self.get(key)
        return default if v is None else float(v)

    def get_bool(self, key: str, default: bool = False) -> bool:
        v = self.get(key)
        if v is None:
            return default
        if v.lower() in ("true", "1", "yes", "on"):
            return True
        if v.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {v}")


def load_config(path: str | Path) -> Config:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'section.key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return Config(values=values, path=Path(path))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    metadata: dict
    theta: np.ndarray
    theta_a: np.ndarray | None = None
    fisher: np.ndarray | None = None


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    meta = json.dumps(ckpt.metadata, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
        f.write(meta)
        theta = np.asarray(ckpt.theta, dtype="<f8")
        f.write(struct.pack("<I", len(theta)))
        f.write(theta.tobytes())
        has_anchor = ckpt.theta_a is not None
        f.write(struct.pack("<B", 1 if has_anchor else 0))
        if has_anchor:
            f.write(np.asarray(ckpt.theta_a, dtype="<f8").tobytes())
            f.write(np.asarray(ckpt.fisher, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ds.FormatError(f"{path}: bad checkpoint magic {data[:4]!r}")
    version, meta_len = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise ds.FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    metadata = json.loads(data[pos : pos + meta_len].decode())
    pos += meta_len
    (n,) = struct.unpack("<I", data[pos : pos + 4])
    pos += 4
    theta = np.frombuffer(data, dtype="<f8", count=n, offset=pos).copy()
    pos += 8 * n
    has_anchor = data[pos]
    pos += 1
    theta_a = fisher = None
    if has_anchor:
        theta_a = np.frombuffer(data, dtype="<f8", count=n, offset=pos).copy()
        pos += 8 * n
        fisher = np.frombuffer(data, dtype="<f8", count=n, offset=pos).copy()
    return Checkpoint(metadata=metadata, theta=theta, theta_a=theta_a, fisher=fisher)


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else format(float(x), ".17g")


def write_csv(path: Path, rows: list[dict]) -> None:
    cols = CSV_COLUMNS.split(",")
    lines = [CSV_COLUMNS]
    for row in rows:
        rendered = []
        for col in cols:
            v = row.get(col)
            if col in ("phase",):
                rendered.append(str(v) if v is not None else "")
            elif col == "step":
                rendered.append(str(int(v)) if v is not None else "")
            else:
                rendered.append(_fmt(v))
        lines.append(",".join(rendered))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiment assembly
# ---------------------------------------------------------------------------

def build_model(cfg: Config) -> CircuitModel:
    arch = cfg.get("experiment.arch", "fully_connected")
    n_qubits = cfg.get_int("experiment.n_qubits", 12)
    depth = cfg.get_int("experiment.depth", 20)
    if arch == "fully_connected":
        return build_fully_connected(n_qubits, depth)
    if arch == "qcnn":
        return build_qcnn(n_qubits, depth)
    raise ConfigError(f"unknown architecture {arch}")


def _file_fingerprint(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_task(cfg: Config, task: str, seed: int) -> tuple[ds.Dataset, ds.Dataset, dict]:
    """Load one task's (train, test) per its config section; returns
    fingerprint metadata alongside."""
    kind = cfg.require(f"{task}.kind")
    fp: dict[str, str] = {}
    if kind == "qdst":
        train_path = Path(cfg.require(f"{task}.train"))
        test_path = Path(cfg.require(f"{task}.test"))
        for p in (train_path, test_path):
            if not p.exists():
                raise ConfigError(f"{task}: missing dataset file {p}")
        fp[str(train_path)] = _file_fingerprint(train_path)
        fp[str(test_path)] = _file_fingerprint(test_path)
        return ds.load_cache(train_path), ds.load_cache(test_path), fp
    if kind == "mnist":
        images = Path(cfg.require(f"{task}.images"))
        labels = Path(cfg.require(f"{task}.labels"))
        for p in (images, labels):
            if not p.exists():
                raise ConfigError(f"{task}: missing dataset file {p}")
        fp[str(images)] = _file_fingerprint(images)
        fp[str(labels)] = _file_fingerprint(labels)
        train, test = ds.load_mnist_idx(
            images,
            labels,
            digits=(cfg.get_int(f"{task}.digit0", 1), cfg.get_int(f"{task}.digit1", 9)),
            n_train=cfg.get_int(f"{task}.n_train", 500),
            n_test=cfg.get_int(f"{task}.n_test", 100),
            seed=stage_seed(seed, task),
        )
        return train, test, fp
    if kind == "grayscale":
        root = Path(cfg.require(f"{task}.dir"))
        if not root.exists():
            raise ConfigError(f"{task}: missing dataset directory {root}")
        fp[str(root)] = "dir"
        train, test = ds.load_grayscale_dir(
            root,
            cfg.require(f"{task}.class0"),
            cfg.require(f"{task}.class1"),
            n_train=cfg.get_int(f"{task}.n_train", 500),
            n_test=cfg.get_int(f"{task}.n_test", 100),
            seed=stage_seed(seed, task),
        )
        return train, test, fp
    raise ConfigError(f"{task}: unknown dataset kind {kind}")


def _train_config(cfg: Config, section: str, seed: int, default_epochs: int) -> training_mod.TrainConfig:
    return training_mod.TrainConfig(
        learning_rate=cfg.get_float(f"{section}.learning_rate", 0.005),
        batch_size=cfg.get_int(f"{section}.batch_size", 100),
        epochs=cfg.get_int(f"{section}.epochs", default_epochs),
        seed=stage_seed(seed, section),
    )


def _base_metadata(cfg: Config, seed: int, fingerprints: dict) -> dict:
    return {
        "architecture": cfg.get("experiment.arch", "fully_connected"),
        "n_qubits": cfg.get_int("experiment.n_qubits", 12),
        "depth": cfg.get_int("experiment.depth", 20),
        "entangler": "ring",
        "seed": seed,
        "prng": training_mod.PRNG_NAME,
        "dataset_fingerprints": fingerprints,
    }


def _prepare_out(cfg: Config, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    copied = out / cfg.path.name
    if copied.resolve() != cfg.path.resolve():
        shutil.copyfile(cfg.path, copied)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: Config, out: Path, seed: int) -> None:
    model = build_model(cfg)
    train_set, test_set, fp = load_task(cfg, "task_a", seed)
    _prepare_out(cfg, out)
    theta0 = init_params(model, stage_seed(seed, "init_a"))
    tc = _train_config(cfg, "train_a", seed, default_epochs=30)
    report = training_mod.train(model, theta0, train_set, tc)
    acc, loss, fid = training_mod.evaluate(model, report.theta, test_set)
    rows = [
        {
            "phase": "train_a",
            "step": e + 1,
            "loss": report.mean_loss[e],
            "accuracy": report.accuracy[e],
            "fidelity": report.mean_true_class_probability[e],
        }
        for e in range(tc.epochs)
    ]
    rows.append({"phase": "test_a", "step": tc.epochs, "loss": loss,
                 "accuracy": acc, "fidelity": fid})
    write_csv(out / "train_a.csv", rows)
    meta = _base_metadata(cfg, seed, fp)
    meta["phase"] = "task_a"
    save_checkpoint(Checkpoint(metadata=meta, theta=report.theta), out / "checkpoint_a.qadv")
    print(f"task A test accuracy {acc:.4f}, loss {loss:.4f}")


def cmd_continual(cfg: Config, out: Path, seed: int, checkpoint_path: Path) -> None:
    model = build_model(cfg)
    ckpt = load_checkpoint(checkpoint_path)
    train_a, test_a, fp_a = load_task(cfg, "task_a", seed)
    train_b, test_b, fp_b = load_task(cfg, "task_b", seed)
    _prepare_out(cfg, out)
    theta_a = ckpt.theta
    fisher = continual_mod.fisher_information(model, theta_a, train_a)
    lam = cfg.get_float("ewc.lambda", 750.0)
    ewc = continual_mod.EwcConfig(lambda_ewc=lam)
    tc = _train_config(cfg, "train_b", seed, default_epochs=20)

    per_epoch: list[dict] = []

    def epoch_hook(epoch: int, theta: np.ndarray) -> None:
        acc_a, loss_a, fid_a = training_mod.evaluate(model, theta, test_a)
        acc_b, loss_b, fid_b = training_mod.evaluate(model, theta, test_b)
        per_epoch.append({
            "phase": "continual", "step": epoch + 1,
            "loss": (loss_a + loss_b) / 2, "accuracy": (acc_a + acc_b) / 2,
            "fidelity": (fid_a + fid_b) / 2,
            "task_a_accuracy": acc_a, "task_b_accuracy": acc_b,
            "task_a_fidelity": fid_a, "task_b_fidelity": fid_b,
            "task_a_loss": loss_a, "task_b_loss": loss_b,
        })

    report = continual_mod.continual_train(
        model, theta_a, train_b, fisher, tc, ewc, epoch_hook=epoch_hook
    )
    write_csv(out / "continual.csv", per_epoch)
    meta = _base_metadata(cfg, seed, {**fp_a, **fp_b})
    meta["phase"] = "continual"
    meta["ewc_lambda"] = lam
    if lam == 0.0:
        meta["ewc_baseline"] = "no-EWC baseline (lambda = 0)"
    meta["fisher_skipped"] = fisher.n_skipped
    save_checkpoint(
        Checkpoint(metadata=meta, theta=report.theta, theta_a=theta_a, fisher=fisher.f),
        out / "checkpoint_merged.qadv",
    )
    final = per_epoch[-1]
    print(
        f"continual: task A {final['task_a_accuracy']:.4f}, "
        f"task B {final['task_b_accuracy']:.4f}, avg {final['accuracy']:.4f}"
    )


def cmd_attack(cfg: Config, out: Path, seed: int, checkpoint_path: Path) -> None:
    model = build_model(cfg)
    ckpt = load_checkpoint(checkpoint_path)
    _, test_a, fp_a = load_task(cfg, "task_a", seed)
    _, test_b, fp_b = load_task(cfg, "task_b", seed)
    _prepare_out(cfg, out)
    ac = attack_mod.AttackConfig.from_total(
        epsilon_total=cfg.get_float("attack.epsilon_total", 0.02),
        n_iterations=cfg.get_int("attack.iterations", 30),
        recompute_gradient_each_iter=cfg.get_bool("attack.recompute", False),
    )
    report = attack_mod.universal_qbim(model, ckpt.theta, test_a, test_b, ac)
    rows = [
        {
            "phase": "attack", "step": k,
            "loss": report.mean_loss[k], "accuracy": report.accuracy[k],
            "fidelity": report.mean_fidelity[k],
            "task_a_accuracy": report.task_accuracy[0][k],
            "task_b_accuracy": report.task_accuracy[1][k],
            "task_a_fidelity": report.task_fidelity[0][k],
            "task_b_fidelity": report.task_fidelity[1][k],
            "task_a_loss": report.task_loss[0][k],
            "task_b_loss": report.task_loss[1][k],
        }
        for k in range(ac.n_iterations + 1)
    ]
    write_csv(out / "attack.csv", rows)
    ds.save_cache(report.adversarial[0], out / "adversarial_a.qdst")
    ds.save_cache(report.adversarial[1], out / "adversarial_b.qdst")
    indices = [(t, _pick_deceived_index(model, ckpt.theta, report, t)) for t in (0, 1)]
    attack_mod.export_adversarial_pairs(
        report, indices, out / "images", side=1 << (model.n_qubits // 2)
    )
    print(
        f"attack: average accuracy {report.accuracy[0]:.4f} -> {report.accuracy[-1]:.4f}, "
        f"mean fidelity {report.mean_fidelity[-1]:.4f}"
    )


def _pick_deceived_index(model, theta, report: attack_mod.AttackReport, task: int) -> int:
    """First sample classified correctly before the attack and wrongly after."""
    from .circuit import forward_batch

    orig = report.originals[task]
    adv = report.adversarial[task]
    p_orig = forward_batch(model, theta, orig.states)
    p_adv = forward_batch(model, theta, adv.states)
    pred_orig = np.where(p_orig[:, 0] >= p_orig[:, 1], 0, 1)
    pred_adv = np.where(p_adv[:, 0] >= p_adv[:, 1], 0, 1)
    truth = orig.class_indices
    hits = np.flatnonzero((pred_orig == truth) & (pred_adv != truth))
    return int(hits[0]) if len(hits) else 0


def cmd_gen_spt(cfg: Config, out: Path, seed: int) -> None:
    _prepare_out(cfg, out)
    config = ds.SptConfig(
        n_sites=cfg.get_int("spt.n_sites", 12),
        lambda_min=cfg.get_float("spt.lambda_min", 0.0),
        lambda_max=cfg.get_float("spt.lambda_max", 2.0),
        lambda_step=cfg.get_float("spt.lambda_step", 0.001),
        n_train=cfg.get_int("spt.n_train", 500),
        n_test=cfg.get_int("spt.n_test", 100),
        seed=stage_seed(seed, "spt"),
    )
    train, test = ds.generate_spt(config)
    ds.save_cache(train, out / "spt_train.qdst")
    ds.save_cache(test, out / "spt_test.qdst")
    print(f"SPT dataset: {len(train)} train / {len(test)} test states")


def cmd_eval(cfg: Config, out: Path, seed: int, checkpoint_path: Path) -> None:
    model = build_model(cfg)
    ckpt = load_checkpoint(checkpoint_path)
    _prepare_out(cfg, out)
    rows = []
    for task in ("task_a", "task_b"):
        if f"{task}.kind" not in cfg.values:
            continue
        _, test, _ = load_task(cfg, task, seed)
        acc, loss, fid = training_mod.evaluate(model, ckpt.theta, test)
        rows.append({"phase": f"eval_{task}", "step": 0, "loss": loss,
                     "accuracy": acc, "fidelity": fid})
        print(f"{task}: accuracy {acc:.4f}, loss {loss:.4f}")
    write_csv(out / "eval.csv", rows)


def cmd_export_images(cfg: Config, out: Path, seed: int) -> None:
    _prepare_out(cfg, out)
    orig = ds.load_cache(cfg.require("export.original"))
    adv = ds.load_cache(cfg.require("export.adversarial"))
    indices = [int(s) for s in cfg.require("export.indices").split(",")]
    side = 1 << (orig.n_qubits // 2)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i in indices:
        for tag, d in (("orig", orig), ("adv", adv)):
            vec = d.raw[i] if d.raw is not None else np.abs(d.states[i])
            peak = vec.max()
            img = np.rint(vec / peak * 255.0).astype(np.uint8).reshape(side, side)
            ds.write_pgm(img_dir / f"sample{i}_{tag}.pgm", img)
    print(f"wrote {2 * len(indices)} images to {img_dir}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qclab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "continual", "attack", "gen-spt", "eval", "export-images"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        if name in ("continual", "attack", "eval"):
            p.add_argument("--checkpoint", required=True)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_thread_limit(resolve_threads(cfg))
        seed = args.seed if args.seed is not None else cfg.get_int("experiment.seed", 0)
        out = Path(args.out or cfg.get("experiment.out", "out"))
        if args.command == "train":
            cmd_train(cfg, out, seed)
        elif args.command == "continual":
            cmd_continual(cfg, out, seed, Path(args.checkpoint))
        elif args.command == "attack":
            cmd_attack(cfg, out, seed, Path(args.checkpoint))
        elif args.command == "gen-spt":
            cmd_gen_spt(cfg, out, seed)
        elif args.command == "eval":
            cmd_eval(cfg, out, seed, Path(args.checkpoint))
        elif args.command == "export-images":
            cmd_export_images(cfg, out, seed)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
