"""Deterministic stand-in corpora for the end-to-end pipelines.

This sandbox has no network access, so both corpora are synthesized. The
handwritten-digit corpus renders thin-stroke "1"s (a near-vertical bar with an
optional top flag) and "9"s (an ellipse with a descending tail) at 28x28 with
randomized geometry and anti-aliased strokes, which reproduces the sparsity
and stroke statistics of scanned digits. The two-class medical-style corpus
pairs elongated vertical ridge structures against a broad central mass. Both
are deterministic so byte-level rerun checks hold.
"""
from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np

from qclab.datasets import write_idx_images, write_idx_labels, write_pgm

DIGITS = (1, 9)
DIGITS_PER_CLASS = 650
# Peak pixel intensities of the rendered corpora (out of 255). Amplitude
# encoding normalizes every image, so training and evaluation are invariant to
# the exposure; only the relative size of an absolute per-pixel perturbation
# budget depends on it. Low-exposure scans keep that budget meaningful.
DIGIT_PEAK = 0.10 * 255.0
MEDICAL_PEAK = 0.20 * 255.0
_SIDE = 28
_YY, _XX = np.mgrid[0:_SIDE, 0:_SIDE].astype(float)


def _stroke(p: tuple, q: tuple, width: float) -> np.ndarray:
    """Anti-aliased line segment: Gaussian falloff of distance to the segment."""
    length_sq = (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2
    t = np.clip(
        ((_YY - p[0]) * (q[0] - p[0]) + (_XX - p[1]) * (q[1] - p[1])) / (length_sq + 1e-12),
        0.0, 1.0,
    )
    dist = np.hypot(_YY - (p[0] + t * (q[0] - p[0])), _XX - (p[1] + t * (q[1] - p[1])))
    return np.exp(-0.5 * (dist / width) ** 2)


def _ellipse_stroke(center: tuple, ry: float, rx: float, width: float) -> np.ndarray:
    dist = np.abs(np.hypot((_YY - center[0]) / ry, (_XX - center[1]) / rx) - 1.0) * min(ry, rx)
    return np.exp(-0.5 * (dist / width) ** 2)


def _draw_one(rng: np.random.Generator) -> np.ndarray:
    x0 = rng.uniform(12, 16)
    slant = rng.uniform(-2.0, 2.0)
    width = rng.uniform(0.9, 1.3)
    img = _stroke(
        (4 + rng.uniform(-1, 1), x0 + slant), (24 + rng.uniform(-1, 1), x0 - slant), width
    )
    if rng.random() < 0.7:  # top flag
        img = np.maximum(img, _stroke((7 + rng.uniform(0, 2), x0 + slant - 4), (4.5, x0 + slant), width))
    return img


def _draw_nine(rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(9, 11), rng.uniform(13, 15)
    ry, rx = rng.uniform(4.5, 6), rng.uniform(4.0, 5.5)
    width = rng.uniform(0.9, 1.3)
    img = _ellipse_stroke((cy, cx), ry, rx, width)
    tail_top = (cy + rng.uniform(-1, 1), cx + rx * rng.uniform(0.8, 1.0))
    tail_bot = (24 + rng.uniform(-1, 1), cx + rx * rng.uniform(0.4, 1.0) - rng.uniform(0, 2))
    return np.maximum(img, _stroke(tail_top, tail_bot, width))


def make_digits_idx(out_dir: str | Path) -> tuple[Path, Path]:
    """28x28 IDX image/label pair with >= 600 samples per target digit."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images_path = out_dir / "digits-images.idx"
    labels_path = out_dir / "digits-labels.idx"
    if images_path.exists() and labels_path.exists():
        return images_path, labels_path
    images, labels = [], []
    for cls, (digit, draw) in enumerate(zip(DIGITS, (_draw_one, _draw_nine))):
        for i in range(DIGITS_PER_CLASS):
            rng = np.random.default_rng([0xD161, cls, i])
            images.append(np.clip(np.rint(draw(rng) * DIGIT_PEAK), 0, 255).astype(np.uint8))
            labels.append(digit)
    order = np.random.default_rng(0xD161).permutation(len(images))
    write_idx_images(images_path, np.stack(images)[order])
    write_idx_labels(labels_path, np.asarray(labels, dtype=np.uint8)[order])
    return images_path, labels_path


def _gaussian_bump(side: int, cy: float, cx: float, sy: float, sx: float) -> np.ndarray:
    y = np.arange(side)[:, None]
    x = np.arange(side)[None, :]
    return np.exp(-(((y - cy) / sy) ** 2 + ((x - cx) / sx) ** 2) / 2.0)


def _ridge_image(rng: np.random.Generator, side: int = 64) -> np.ndarray:
    img = np.zeros((side, side))
    for _ in range(rng.integers(3, 6)):
        cx = rng.uniform(8, side - 8)
        cy = rng.uniform(20, side - 20)
        img += rng.uniform(0.6, 1.0) * _gaussian_bump(
            side, cy, cx, sy=rng.uniform(14, 22), sx=rng.uniform(1.5, 3.0)
        )
    img += 0.35 * _gaussian_bump(side, side - 8, side / 2, 8, 20)  # palm mass
    return img


def _mass_image(rng: np.random.Generator, side: int = 64) -> np.ndarray:
    img = 0.25 * rng.standard_normal((side, side)) ** 2  # speckle background
    img += rng.uniform(0.8, 1.2) * _gaussian_bump(
        side,
        cy=rng.uniform(24, 40),
        cx=rng.uniform(24, 40),
        sy=rng.uniform(10, 16),
        sx=rng.uniform(10, 16),
    )
    return img


def make_medical_corpus(out_dir: str | Path, n_per_class: int = 620) -> Path:
    """Two-class 64x64 PGM corpus under ridge/ and mass/ subdirectories."""
    out_dir = Path(out_dir)
    done = out_dir / ".complete"
    if done.exists():
        return out_dir
    for cls, synth in (("ridge", _ridge_image), ("mass", _mass_image)):
        sub = out_dir / cls
        sub.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            rng = np.random.default_rng([0x3ED5, zlib.crc32(cls.encode()), i])
            img = synth(rng)
            img = img / img.max() * MEDICAL_PEAK
            write_pgm(sub / f"{cls}{i:04d}.pgm", np.rint(img).astype(np.uint8))
    done.write_text("ok\n")
    return out_dir
