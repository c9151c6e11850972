"""Dataset ingestion, amplitude encoding, SPT ground-state generation, caching.

Classical images are rescaled to 64x64 (bilinear, half-pixel centers),
divided by 255 and amplitude-encoded into 12-qubit statevectors. Quantum
(SPT) datasets carry the ground states directly and have no raw pixel rows.

The QDST cache is a little-endian binary format: magic, version, flags
(bit 0 = raw rows present), n_samples, n_qubits, labels (one class byte per
sample), raw rows (f64), state rows (interleaved re/im f64). Round trips are
bit-exact.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .statevector import DegenerateInputError

IMAGE_SIDE = 64
QDST_MAGIC = b"QDST"
QDST_VERSION = 1

# fixed Lanczos start-vector seed; not the experiment seed, so the generated
# states are identical across configurations
_EIGS_V0_SEED = 0x51C1


class FormatError(ValueError):
    """File does not conform to the expected binary layout."""


class InsufficientDataError(ValueError):
    """Not enough samples of a class to honor the requested split."""


class ConvergenceError(RuntimeError):
    """Iterative eigensolver failed to converge."""


@dataclass
class Dataset:
    """Matched raw samples, encoded statevectors, and one-hot labels.

    raw is None for quantum datasets, where states are the data themselves.
    """

    raw: np.ndarray | None
    states: np.ndarray
    labels: np.ndarray
    task_tag: str

    def __post_init__(self):
        if self.raw is not None and len(self.raw) != len(self.states):
            raise ValueError("raw/states length mismatch")
        if len(self.labels) != len(self.states):
            raise ValueError("labels/states length mismatch")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_qubits(self) -> int:
        return int(self.states.shape[1]).bit_length() - 1

    @property
    def class_indices(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)

    @classmethod
    def from_raw(cls, raw: np.ndarray, class_idx: np.ndarray, task_tag: str) -> "Dataset":
        raw = np.asarray(raw, dtype=np.float64)
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise DegenerateInputError("all-zero sample cannot be encoded")
        states = raw.astype(np.complex128) / norms
        return cls(raw=raw, states=states, labels=one_hot(class_idx), task_tag=task_tag)

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            raw=None if self.raw is None else self.raw[indices],
            states=self.states[indices],
            labels=self.labels[indices],
            task_tag=self.task_tag,
        )


def one_hot(class_idx: np.ndarray) -> np.ndarray:
    class_idx = np.asarray(class_idx, dtype=np.int64)
    out = np.zeros((len(class_idx), 2))
    out[np.arange(len(class_idx)), class_idx] = 1.0
    return out


def resize_bilinear(img: np.ndarray, side: int = IMAGE_SIDE) -> np.ndarray:
    """Bilinear resample to side x side; same-size inputs pass through bit-exactly."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if (h, w) == (side, side):
        return img.copy()

    def axis_weights(n_src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(side) + 0.5) * (n_src / side) - 0.5
        src = np.clip(src, 0.0, n_src - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_weights(h)
    x0, x1, wx = axis_weights(w)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy[:, None]) + bot * wy[:, None]


# ---------------------------------------------------------------------------
# IDX (MNIST) ingestion
# ---------------------------------------------------------------------------

def _read_idx(path: str | Path, expected_magic: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic {magic}, expected {expected_magic}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    offset = 4 + 4 * ndim
    count = int(np.prod(dims))
    if len(data) < offset + count:
        raise FormatError(f"{path}: truncated IDX payload")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=offset).reshape(dims)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, h, w))
        f.write(images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.tobytes())


def _balanced_split(
    per_class_raw: list[np.ndarray],
    n_train: int,
    n_test: int,
    seed,
    task_tag: str,
) -> tuple[Dataset, Dataset]:
    """Split per-class raw pixel pools into balanced train/test datasets."""
    rng = np.random.default_rng(seed)
    train_raw, train_cls, test_raw, test_cls = [], [], [], []
    for cls, pool in enumerate(per_class_raw):
        if len(pool) < n_train + n_test:
            raise InsufficientDataError(
                f"class {cls}: need {n_train + n_test} samples, have {len(pool)}"
            )
        order = rng.permutation(len(pool))
        train_raw.append(pool[order[:n_train]])
        test_raw.append(pool[order[n_train : n_train + n_test]])
        train_cls.append(np.full(n_train, cls))
        test_cls.append(np.full(n_test, cls))

    def assemble(raws, clss) -> Dataset:
        raw = np.concatenate(raws)
        cls_idx = np.concatenate(clss)
        perm = rng.permutation(len(raw))
        return Dataset.from_raw(raw[perm], cls_idx[perm], task_tag)

    return assemble(train_raw, train_cls), assemble(test_raw, test_cls)


def load_mnist_idx(
    images_path: str | Path,
    labels_path: str | Path,
    digits: tuple[int, int],
    n_train: int,
    n_test: int,
    seed,
) -> tuple[Dataset, Dataset]:
    """Two-digit binary task from IDX files; n_train/n_test are per-class counts.

    first digit -> class 0, second -> class 1; 28x28 images are upscaled to
    64x64, scaled to [0,1], and amplitude-encoded.
    """
    images = _read_idx(images_path, 2051)
    labels = _read_idx(labels_path, 2049)
    if len(images) != len(labels):
        raise FormatError("image/label counts differ")
    pools = []
    for digit in digits:
        sel = images[labels == digit]
        flat = np.stack(
            [resize_bilinear(img).reshape(-1) for img in sel.astype(np.float64)]
        ) / 255.0 if len(sel) else np.zeros((0, IMAGE_SIDE * IMAGE_SIDE))
        pools.append(flat)
    return _balanced_split(pools, n_train, n_test, seed, task_tag=f"mnist{digits[0]}v{digits[1]}")


# ---------------------------------------------------------------------------
# PGM (P5) grayscale directories
# ---------------------------------------------------------------------------

def read_pgm(path: str | Path) -> np.ndarray:
    """8-bit binary PGM (P5) -> uint8 array (h, w)."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    if len(data) < pos + w * h:
        raise FormatError(f"{path}: truncated PGM payload")
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def load_grayscale_dir(
    path: str | Path,
    class0_subdir: str,
    class1_subdir: str,
    n_train: int,
    n_test: int,
    seed,
) -> tuple[Dataset, Dataset]:
    """Binary task from two directories of PGM images; per-class split counts.

    Files are taken in lexicographic filename order before the seeded shuffle.
    """
    pools = []
    for sub in (class0_subdir, class1_subdir):
        files = sorted(Path(path, sub).glob("*.pgm"))
        if not files:
            raise InsufficientDataError(f"no PGM files in {Path(path, sub)}")
        flat = np.stack(
            [resize_bilinear(read_pgm(f).astype(np.float64)).reshape(-1) for f in files]
        ) / 255.0
        pools.append(flat)
    return _balanced_split(pools, n_train, n_test, seed, task_tag="grayscale")


# ---------------------------------------------------------------------------
# cluster-Ising (SPT) ground states
# ---------------------------------------------------------------------------

@dataclass
class SptConfig:
    """Grid and split configuration for the cluster-Ising dataset.

    Labels: coupling < 1 -> class 0 (SPT/cluster phase), > 1 -> class 1
    (antiferromagnet); the critical point 1 is excluded.
    """

    n_sites: int = 12
    lambda_min: float = 0.0
    lambda_max: float = 2.0
    lambda_step: float = 0.001
    n_train: int = 500  # per class
    n_test: int = 100   # per class
    seed: int = 0
    tol: float = 1e-10

    def grid(self) -> np.ndarray:
        n_pts = int(round((self.lambda_max - self.lambda_min) / self.lambda_step)) + 1
        lam = self.lambda_min + self.lambda_step * np.arange(n_pts)
        return lam[np.abs(lam - 1.0) > self.lambda_step / 2.0]


_PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}


def pauli_string_sparse(n_sites: int, ops: dict[int, str]) -> sp.csr_matrix:
    """Sparse tensor product placing ops[site] on each site (site 0 = LSB)."""
    mat = sp.identity(1, format="csr", dtype=np.complex128)
    for site in range(n_sites):
        local = sp.csr_matrix(_PAULI[ops.get(site, "I")])
        mat = sp.kron(local, mat, format="csr")
    return mat


def cluster_ising_terms(n_sites: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(cluster part, YY part) of H(c) = -sum XZX + c * sum YY, periodic."""
    dim = 1 << n_sites
    h_cluster = sp.csr_matrix((dim, dim), dtype=np.complex128)
    h_yy = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for j in range(n_sites):
        h_cluster -= pauli_string_sparse(
            n_sites, {(j - 1) % n_sites: "X", j: "Z", (j + 1) % n_sites: "X"}
        )
        h_yy += pauli_string_sparse(n_sites, {j: "Y", (j + 1) % n_sites: "Y"})
    return h_cluster, h_yy


def spt_ground_state(
    h_cluster: sp.csr_matrix,
    h_yy: sp.csr_matrix,
    coupling: float,
    tol: float = 1e-10,
) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the cluster-Ising Hamiltonian at one coupling.

    Deterministic: fixed PRNG start vector, eigenvector phase fixed by making
    the first non-negligible amplitude real positive.
    """
    h = h_cluster + coupling * h_yy
    dim = h.shape[0]
    v0 = np.random.default_rng(_EIGS_V0_SEED).standard_normal(dim)
    try:
        vals, vecs = eigsh(h, k=1, which="SA", v0=v0, tol=tol, maxiter=dim * 50)
    except Exception as exc:  # ArpackNoConvergence and friends
        raise ConvergenceError(f"ground-state solve failed at coupling {coupling}: {exc}")
    vec = vecs[:, 0]
    anchor = np.flatnonzero(np.abs(vec) > 1e-10 * np.abs(vec).max())[0]
    phase = vec[anchor] / np.abs(vec[anchor])
    vec = vec / phase
    vec /= np.linalg.norm(vec)
    return float(vals[0]), vec.astype(np.complex128)


def generate_spt(config: SptConfig) -> tuple[Dataset, Dataset]:
    """Cluster-Ising ground-state datasets split per the seeded subsample."""
    if config.n_sites > 14:
        raise ValueError("n_sites capped at 14 (dense statevector backend)")
    lam = config.grid()
    rng = np.random.default_rng(config.seed)
    h_cluster, h_yy = cluster_ising_terms(config.n_sites)

    splits = {"train": ([], []), "test": ([], [])}
    for cls, pool in enumerate((lam[lam < 1.0], lam[lam > 1.0])):
        need = config.n_train + config.n_test
        if len(pool) < need:
            raise InsufficientDataError(
                f"class {cls}: grid offers {len(pool)} couplings, need {need}"
            )
        order = rng.permutation(len(pool))
        chosen = {
            "train": pool[order[: config.n_train]],
            "test": pool[order[config.n_train : need]],
        }
        for split, values in chosen.items():
            states = [spt_ground_state(h_cluster, h_yy, c, config.tol)[1] for c in values]
            splits[split][0].extend(states)
            splits[split][1].extend([cls] * len(values))

    def assemble(states, cls_idx) -> Dataset:
        states = np.stack(states)
        cls_idx = np.asarray(cls_idx)
        perm = rng.permutation(len(states))
        return Dataset(
            raw=None,
            states=states[perm],
            labels=one_hot(cls_idx[perm]),
            task_tag="spt",
        )

    return assemble(*splits["train"]), assemble(*splits["test"])


# ---------------------------------------------------------------------------
# QDST binary cache
# ---------------------------------------------------------------------------

def save_cache(dataset: Dataset, path: str | Path) -> None:
    n = len(dataset)
    dim = dataset.states.shape[1]
    flags = 1 if dataset.raw is not None else 0
    with open(path, "wb") as f:
        f.write(QDST_MAGIC)
        f.write(struct.pack("<IIII", QDST_VERSION, flags, n, dataset.n_qubits))
        f.write(dataset.class_indices.astype(np.uint8).tobytes())
        if dataset.raw is not None:
            f.write(dataset.raw.astype("<f8").tobytes())
        inter = np.empty((n, 2 * dim))
        inter[:, 0::2] = dataset.states.real
        inter[:, 1::2] = dataset.states.imag
        f.write(inter.astype("<f8").tobytes())


def load_cache(path: str | Path) -> Dataset:
    data = Path(path).read_bytes()
    if data[:4] != QDST_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    version, flags, n, n_qubits = struct.unpack("<IIII", data[4:20])
    if version != QDST_VERSION:
        raise FormatError(f"{path}: unsupported QDST version {version}")
    dim = 1 << n_qubits
    pos = 20
    expected = n + (n * dim * 8 if flags & 1 else 0) + n * dim * 16
    if len(data) - pos != expected:
        raise FormatError(f"{path}: truncated QDST payload")
    cls_idx = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    pos += n
    raw = None
    if flags & 1:
        raw = np.frombuffer(data, dtype="<f8", count=n * dim, offset=pos).reshape(n, dim)
        pos += n * dim * 8
    inter = np.frombuffer(data, dtype="<f8", count=n * 2 * dim, offset=pos).reshape(n, 2 * dim)
    states = inter[:, 0::2] + 1j * inter[:, 1::2]
    return Dataset(
        raw=None if raw is None else raw.copy(),
        states=states,
        labels=one_hot(cls_idx),
        task_tag=Path(path).stem,
    )
