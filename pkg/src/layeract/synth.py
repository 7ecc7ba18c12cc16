"""Procedural 28x28 digit corpus for environments without the MNIST files.

Glyphs 0-9 are rasterized once at high resolution and each sample applies
a random affine warp (rotation, shear, anisotropic scale, translation),
brightness jitter, and uint8 quantization, yielding an IDX-format dataset
with the exact MNIST file layout and value range.  Generation is a pure
function of the seed.

This is a stand-in corpus: it exercises the identical training and
analysis pipeline, but accuracy numbers on it are not MNIST numbers.
A ``SYNTHETIC.txt`` marker is written next to the IDX files.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy.ndimage import affine_transform

from .core import Rng
from .data import write_idx_images, write_idx_labels

__all__ = ["render_digit_corpus", "write_corpus", "MNIST_FILENAMES"]

GLYPH_SIZE = 64
OUT_SIZE = 28

MNIST_FILENAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _glyphs() -> np.ndarray:
    """One (10, 64, 64) float array of centered digit glyphs in [0, 1]."""
    font = ImageFont.load_default(size=44)
    out = np.zeros((10, GLYPH_SIZE, GLYPH_SIZE), dtype=np.float64)
    for digit in range(10):
        img = Image.new("L", (GLYPH_SIZE, GLYPH_SIZE), 0)
        draw = ImageDraw.Draw(img)
        draw.text(
            (GLYPH_SIZE / 2, GLYPH_SIZE / 2),
            str(digit),
            fill=255,
            font=font,
            anchor="mm",
        )
        out[digit] = np.asarray(img, dtype=np.float64) / 255.0
    return out


def render_digit_corpus(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Generate ``n`` warped digit images.

    Returns ``(images, labels)`` with uint8 images of shape (n, 784).
    """
    rng = Rng(seed)
    gen = rng.generator
    glyphs = _glyphs()

    labels = gen.integers(0, 10, size=n)
    theta = gen.uniform(-0.25, 0.25, size=n)
    shear = gen.uniform(-0.15, 0.15, size=n)
    log_sx = gen.uniform(-0.12, 0.18, size=n)
    log_sy = gen.uniform(-0.12, 0.18, size=n)
    shift = gen.uniform(-2.0, 2.0, size=(n, 2))
    intensity = gen.uniform(0.75, 1.0, size=n)

    # Base zoom maps the ~44 px glyph into the ~20 px digit box of a 28 px
    # frame (input pixels per output pixel).
    base_zoom = 2.1
    c_out = np.array([(OUT_SIZE - 1) / 2.0, (OUT_SIZE - 1) / 2.0])
    c_in = np.array([(GLYPH_SIZE - 1) / 2.0, (GLYPH_SIZE - 1) / 2.0])

    images = np.empty((n, OUT_SIZE * OUT_SIZE), dtype=np.uint8)
    for i in range(n):
        ct, st = np.cos(theta[i]), np.sin(theta[i])
        rot = np.array([[ct, -st], [st, ct]])
        shr = np.array([[1.0, shear[i]], [0.0, 1.0]])
        scl = np.diag([base_zoom * np.exp(log_sx[i]), base_zoom * np.exp(log_sy[i])])
        matrix = rot @ shr @ scl
        offset = c_in - matrix @ (c_out + shift[i])
        warped = affine_transform(
            glyphs[labels[i]],
            matrix,
            offset=offset,
            output_shape=(OUT_SIZE, OUT_SIZE),
            order=1,
            mode="constant",
            cval=0.0,
            prefilter=False,
        )
        img = np.clip(warped * intensity[i] * 255.0, 0.0, 255.0)
        images[i] = np.rint(img).astype(np.uint8).reshape(-1)
    return images, labels.astype(np.uint8)


def write_corpus(directory, train_n: int = 60000, test_n: int = 10000, seed: int = 2026) -> None:
    """Write a full train/test IDX corpus using the MNIST file names."""
    os.makedirs(directory, exist_ok=True)
    train_images, train_labels = render_digit_corpus(train_n, seed)
    test_images, test_labels = render_digit_corpus(test_n, seed + 1)
    names = MNIST_FILENAMES
    write_idx_images(os.path.join(directory, names["train_images"]), train_images, OUT_SIZE, OUT_SIZE)
    write_idx_labels(os.path.join(directory, names["train_labels"]), train_labels)
    write_idx_images(os.path.join(directory, names["test_images"]), test_images, OUT_SIZE, OUT_SIZE)
    write_idx_labels(os.path.join(directory, names["test_labels"]), test_labels)
    with open(os.path.join(directory, "SYNTHETIC.txt"), "w", encoding="utf-8") as fh:
        fh.write(
            "Procedurally generated digit corpus (not MNIST).\n"
            f"train_n={train_n} test_n={test_n} seed={seed}\n"
        )
