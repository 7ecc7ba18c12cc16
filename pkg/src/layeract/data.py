"""MNIST-style IDX ingestion, [0, 1] rescaling, and input noise models.

Noise is always applied after rescaling.  Three models are supported:

    gaussian: x + N(mean, std^2) i.i.d. per pixel, no clipping
    poisson:  Poisson(x * rate_scale) / rate_scale  (shot noise)
    blur:     separable 2-D Gaussian convolution, reflect padding,
              kernel normalized to sum 1

Additive noise is deliberately not clipped back into [0, 1]; the
fluctuation analysis models the perturbation as a pure additive shift.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .core import Rng
from .errors import FormatError, InvalidInput, ShapeError

__all__ = [
    "ImageSet",
    "NoiseSpec",
    "GaussianNoise",
    "PoissonNoise",
    "BlurNoise",
    "load_idx",
    "apply_noise",
    "paper_noise_suite",
    "parse_noise_spec",
    "resolve_dataset",
    "load_dataset",
    "gaussian_kernel_1d",
    "write_idx_images",
    "write_idx_labels",
]

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass(frozen=True)
class ImageSet:
    """Flattened grayscale images with integer class labels.

    ``images`` has shape (n, width*height); pixel values are in [0, 1]
    straight after loading and may leave that range once noise is applied.
    """

    images: np.ndarray
    labels: np.ndarray
    width: int = 28
    height: int = 28

    def __post_init__(self):
        if self.images.ndim != 2 or self.labels.ndim != 1:
            raise ShapeError("images must be (n, pixels) and labels (n,)")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.images.shape[1] != self.width * self.height:
            raise ShapeError(
                f"images have {self.images.shape[1]} pixels, expected {self.width * self.height}"
            )

    def __len__(self) -> int:
        return self.images.shape[0]


class NoiseSpec:
    """Base class for input perturbation descriptions."""

    kind: str = ""

    def tag(self) -> str:
        """Short filesystem-safe identifier, e.g. 'gaussian_0_0.1'."""
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianNoise(NoiseSpec):
    mean: float = 0.0
    std: float = 0.1
    kind = "gaussian"

    def __post_init__(self):
        if self.std < 0:
            raise InvalidInput(f"std must be >= 0, got {self.std}")

    def tag(self) -> str:
        return f"gaussian_{self.mean:g}_{self.std:g}"


@dataclass(frozen=True)
class PoissonNoise(NoiseSpec):
    rate_scale: float = 30.0
    kind = "poisson"

    def __post_init__(self):
        if self.rate_scale <= 0:
            raise InvalidInput(f"rate_scale must be > 0, got {self.rate_scale}")

    def tag(self) -> str:
        return f"poisson_{self.rate_scale:g}"


@dataclass(frozen=True)
class BlurNoise(NoiseSpec):
    kernel: int = 3
    sigma: float = 1.0
    kind = "blur"

    def __post_init__(self):
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise InvalidInput(f"kernel must be odd and >= 3, got {self.kernel}")
        if self.sigma <= 0:
            raise InvalidInput(f"sigma must be > 0, got {self.sigma}")

    def tag(self) -> str:
        return f"blur_{self.kernel}_{self.sigma:g}"


def _open_maybe_gzip(path):
    # Sniff the two-byte gzip signature rather than trusting the extension.
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count: int, what: str, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(
            f"truncated IDX file while reading {what} at byte {offset}",
            offset=offset,
        )
    return data


def load_idx(images_path, labels_path) -> ImageSet:
    """Parse a big-endian IDX image/label pair and rescale pixels to [0, 1].

    Accepts gzip-compressed files transparently.  Offsets reported in
    errors refer to the decompressed stream.
    """
    with _open_maybe_gzip(images_path) as fh:
        header = _read_exact(fh, 16, "image header", 0)
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IMAGE_MAGIC:
            raise FormatError(
                f"bad image magic: found {magic}, expected {IMAGE_MAGIC}", offset=0
            )
        raw = _read_exact(fh, count * rows * cols, "pixel data", 16)
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    images = pixels.reshape(count, rows * cols)

    with _open_maybe_gzip(labels_path) as fh:
        header = _read_exact(fh, 8, "label header", 0)
        magic, label_count = struct.unpack(">II", header)
        if magic != LABEL_MAGIC:
            raise FormatError(
                f"bad label magic: found {magic}, expected {LABEL_MAGIC}", offset=0
            )
        raw = _read_exact(fh, label_count, "label data", 8)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if count != label_count:
        raise FormatError(
            f"image count {count} != label count {label_count}", offset=4
        )
    return ImageSet(images=images, labels=labels, width=cols, height=rows)


def write_idx_images(path, images_u8: np.ndarray, width: int, height: int) -> None:
    """Write (n, width*height) uint8 pixels in IDX format."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, images_u8.shape[0], height, width))
        fh.write(images_u8.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    """Discrete Gaussian taps exp(-i^2 / (2 sigma^2)) normalized to sum 1."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def apply_noise(image_set: ImageSet, spec: NoiseSpec, rng: Rng) -> ImageSet:
    """Return a perturbed copy of the set; labels are shared, pixels replaced."""
    x = image_set.images
    if isinstance(spec, GaussianNoise):
        noisy = x + rng.generator.normal(spec.mean, spec.std, size=x.shape) \
            if spec.std > 0 else x + spec.mean
    elif isinstance(spec, PoissonNoise):
        lam = spec.rate_scale
        noisy = rng.generator.poisson(x * lam).astype(np.float64) / lam
    elif isinstance(spec, BlurNoise):
        kernel = gaussian_kernel_1d(spec.kernel, spec.sigma)
        frames = x.reshape(-1, image_set.height, image_set.width)
        # 'reflect' repeats the edge sample, which keeps total mass exact
        # for a normalized kernel.
        blurred = convolve1d(frames, kernel, axis=1, mode="reflect")
        blurred = convolve1d(blurred, kernel, axis=2, mode="reflect")
        noisy = blurred.reshape(x.shape)
    else:
        raise InvalidInput(f"unknown noise spec {spec!r}")
    return ImageSet(
        images=noisy,
        labels=image_set.labels,
        width=image_set.width,
        height=image_set.height,
    )


def paper_noise_suite() -> list[NoiseSpec]:
    """The six benchmark noise cases, in order: four Gaussian, Poisson, blur."""
    return [
        GaussianNoise(0.0, 0.05),
        GaussianNoise(0.1, 0.05),
        GaussianNoise(0.0, 0.1),
        GaussianNoise(0.1, 0.1),
        PoissonNoise(),
        BlurNoise(3, 1.0),
    ]


def resolve_dataset(data_dir) -> dict[str, str]:
    """Locate the four IDX files (optionally .gz) under ``data_dir``.

    Returns a dict with keys train_images/train_labels/test_images/
    test_labels; raises :class:`InvalidInput` listing what is missing.
    """
    import os

    names = {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
    }
    found, missing = {}, []
    for key, base in names.items():
        for candidate in (base, base + ".gz"):
            path = os.path.join(data_dir, candidate)
            if os.path.exists(path):
                found[key] = path
                break
        else:
            missing.append(base)
    if missing:
        raise InvalidInput(
            f"dataset files missing under {data_dir}: {', '.join(missing)}"
        )
    return found


def load_dataset(data_dir) -> tuple[ImageSet, ImageSet]:
    """Load the train and test splits found under ``data_dir``."""
    paths = resolve_dataset(data_dir)
    train = load_idx(paths["train_images"], paths["train_labels"])
    test = load_idx(paths["test_images"], paths["test_labels"])
    return train, test


def parse_noise_spec(text: str) -> NoiseSpec:
    """Parse CLI noise strings: 'gaussian:MEAN:STD', 'poisson[:RATE]', 'blur:K:SIGMA'."""
    parts = text.strip().lower().split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "gaussian":
            if len(args) != 2:
                raise InvalidInput("gaussian noise needs mean and std")
            return GaussianNoise(float(args[0]), float(args[1]))
        if kind == "poisson":
            if len(args) > 1:
                raise InvalidInput("poisson noise takes at most a rate scale")
            return PoissonNoise(float(args[0])) if args else PoissonNoise()
        if kind == "blur":
            if len(args) != 2:
                raise InvalidInput("blur noise needs kernel size and sigma")
            return BlurNoise(int(args[0]), float(args[1]))
    except ValueError as exc:
        raise InvalidInput(f"bad noise spec {text!r}: {exc}") from None
    raise InvalidInput(
        f"unknown noise kind {kind!r}; expected gaussian, poisson, or blur"
    )
