"""IDX files, MNIST-style benchmarks and a synthetic landmark task."""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .mtl import TriModalDataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.newbyteorder("="): k for k, v in _IDX_TYPES.items()}

SUBSET_SIZES = {"1k": 1000, "3k": 3000, "5k": 5000, "50k": 50000, "100k": 100000}
PAPER_SPLIT_SIZES = {"std": (50000, 10000, 10000),
                     "noise": (100000, 20000, 50000),
                     "img": (100000, 20000, 50000)}


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: missing header")
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or code not in _IDX_TYPES or ndim == 0:
        raise BadMagicError(f"{path}: bad magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedFileError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    dtype = _IDX_TYPES[code]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) - head < expected:
        raise TruncatedFileError(f"{path}: expected {expected} data bytes, found {len(raw) - head}")
    if len(raw) - head > expected:
        raise IdxError(f"{path}: {len(raw) - head - expected} trailing bytes")
    data = np.frombuffer(raw, dtype=dtype, offset=head, count=int(np.prod(dims)))
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    a = np.asarray(array)
    code = _IDX_CODES.get(a.dtype.newbyteorder("="))
    if code is None:
        raise IdxError(f"dtype {a.dtype} has no IDX type code")
    header = struct.pack(">HBB", 0, code, a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    body = np.ascontiguousarray(a, dtype=_IDX_TYPES[code]).tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        # fixed mtime keeps the compressed bytes reproducible
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(header + body)
    else:
        path.write_bytes(header + body)


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (n, side*side) in [0, 1]
    labels: np.ndarray  # (n,) int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.images.shape[0] != self.labels.size:
            raise CountMismatchError(f"{self.images.shape[0]} images for {self.labels.size} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixels must lie in [0, 1]")

    def __len__(self):
        return self.labels.size

    def take(self, idx) -> "LabeledImageSet":
        return LabeledImageSet(self.images[idx], self.labels[idx])


def _check_magic(path, expected):
    with _open(path) as f:
        head = f.read(4)
    if len(head) < 4:
        raise TruncatedFileError(f"{path}: missing header")
    magic = int.from_bytes(head, "big")
    if magic != expected:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected:08x}")


def load_idx(images_path, labels_path) -> LabeledImageSet:
    """Read an MNIST image/label file pair; pixels are scaled to [0, 1]."""
    _check_magic(images_path, IMAGE_MAGIC)
    _check_magic(labels_path, LABEL_MAGIC)
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels")
    return LabeledImageSet(images.reshape(images.shape[0], -1) / 255.0, labels)


def save_idx_pair(data: LabeledImageSet, images_path, labels_path, side=28) -> None:
    pixels = np.rint(data.images * 255.0).astype(np.uint8).reshape(len(data), side, side)
    write_idx(images_path, pixels)
    write_idx(labels_path, data.labels.astype(np.uint8))


# -- benchmarks --------------------------------------------------------------

@dataclass
class BenchmarkSplit:
    train: LabeledImageSet
    valid: LabeledImageSet
    test: LabeledImageSet
    tag: str = "all"


def _composite(digits, backgrounds, threshold):
    return np.where(digits > threshold, digits, backgrounds)


def _noise_backgrounds(n, side, rng, filter_size):
    noise = rng.random((n, side, side))
    smooth = uniform_filter(noise, size=(1, filter_size, filter_size), mode="reflect")
    return smooth.reshape(n, side * side)


def _pool_backgrounds(n, side, rng, pool):
    out = np.empty((n, side * side))
    for i in range(n):
        img = pool[rng.integers(len(pool))]
        r = rng.integers(img.shape[0] - side + 1)
        c = rng.integers(img.shape[1] - side + 1)
        out[i] = img[r:r + side, c:c + side].ravel()
    return out


def _resample(base: LabeledImageSet, size, rng):
    if size is None or size == len(base):
        return base
    return base.take(rng.integers(len(base), size=size))


def build_benchmark(kind, train, valid, test, seed, sizes=None, pool=None,
                    filter_size=5, threshold=0.1, side=28) -> BenchmarkSplit:
    """Build an mnist-std / -noise / -img style split.

    ``sizes`` gives (train, valid, test) counts; noisy kinds resample each base
    set with replacement and draw a fresh background per image. ``None``
    keeps each base set's size. ``pool`` is a sequence of 2-D grayscale
    arrays in [0, 1], at least ``side`` pixels on each axis.
    """
    if kind == "std":
        return BenchmarkSplit(train, valid, test)
    if kind not in ("noise", "img"):
        raise ValueError(f"unknown benchmark kind {kind!r}")
    if kind == "img":
        if not pool:
            raise ValueError("the img benchmark needs a nonempty background pool")
        pool = [np.asarray(p, dtype=np.float64) for p in pool]
    sizes = sizes or (None, None, None)
    children = np.random.SeedSequence(seed).spawn(3)
    out = []
    for base, size, ss in zip((train, valid, test), sizes, children):
        rng = np.random.default_rng(ss)
        sub = _resample(base, size, rng)
        if kind == "noise":
            bg = _noise_backgrounds(len(sub), side, rng, filter_size)
        else:
            bg = _pool_backgrounds(len(sub), side, rng, pool)
        out.append(LabeledImageSet(_composite(sub.images, bg, threshold), sub.labels))
    return BenchmarkSplit(*out)


def stratified_indices(labels, size, seed) -> np.ndarray:
    """``size`` indices with class counts equal up to one, sorted."""
    labels = np.asarray(labels).ravel()
    if size > labels.size:
        raise ValueError(f"subset of {size} requested from {labels.size} samples")
    classes = np.unique(labels)
    rng = np.random.default_rng(seed)
    base, extra = divmod(size, classes.size)
    bonus = set(rng.choice(classes.size, size=extra, replace=False).tolist())
    picked = []
    for ci, c in enumerate(classes):
        idx = np.flatnonzero(labels == c)
        want = base + (ci in bonus)
        if want > idx.size:
            raise ValueError(f"class {c} has only {idx.size} samples, {want} requested")
        picked.append(rng.choice(idx, size=want, replace=False))
    return np.sort(np.concatenate(picked))


def subsample(split: BenchmarkSplit, tag: str, seed) -> BenchmarkSplit:
    if tag == "all":
        return split
    if tag not in SUBSET_SIZES:
        raise ValueError(f"unknown subset tag {tag!r}")
    idx = stratified_indices(split.train.labels, SUBSET_SIZES[tag], seed)
    return BenchmarkSplit(split.train.take(idx), split.valid, split.test, tag)


def mnist_split(train: LabeledImageSet, test: LabeledImageSet | None = None,
                seed=0) -> BenchmarkSplit:
    """The 50k/10k/10k split, or a stratified 60/20/20 split of a smaller pool.

    A full 60000-image training file yields train = first 50000, valid = last
    10000. Any other pool (e.g. a 5000-image MNIST excerpt) is split
    class-stratified into train/valid/test, ignoring ``test``.
    """
    if len(train) == 60000 and test is not None:
        return BenchmarkSplit(train.take(np.arange(50000)), train.take(np.arange(50000, 60000)), test)
    n = len(train)
    idx_test = stratified_indices(train.labels, n // 5, seed)
    rest = np.setdiff1d(np.arange(n), idx_test)
    idx_valid = rest[stratified_indices(train.labels[rest], n // 5, seed + 1)]
    idx_train = np.setdiff1d(rest, idx_valid)
    return BenchmarkSplit(train.take(idx_train), train.take(idx_valid), train.take(idx_test))


def find_mnist(directory) -> BenchmarkSplit | None:
    """Load MNIST IDX files from ``directory`` (plain or .gz); None if absent."""
    d = Path(directory)

    def pick(stem):
        for name in (stem, stem + ".gz"):
            if (d / name).exists():
                return d / name
        return None

    tr_i, tr_l = pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte")
    if tr_i is None or tr_l is None:
        return None
    train = load_idx(tr_i, tr_l)
    te_i, te_l = pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte")
    test = load_idx(te_i, te_l) if te_i and te_l else None
    return mnist_split(train, test)


# -- synthetic landmarks -----------------------------------------------------

@dataclass
class SyntheticLandmarkTask:
    images: np.ndarray    # (n, side*side) in [0, 1]
    targets: np.ndarray   # (n, 2P) as x0, y0, x1, y1, ... in [-1, 1]
    points: np.ndarray    # (n, P, 2) pixel coordinates
    side: int
    ref: tuple            # NRMSE normalizer point indices

    def tri_modal(self, paired, input_only=0, label_only=0) -> TriModalDataset:
        """Split the first rows into paired / input-only / label-only views."""
        a, b, c = paired, paired + input_only, paired + input_only + label_only
        if c > self.images.shape[0]:
            raise ValueError("not enough samples for the requested partition")
        return TriModalDataset(self.images[:a], self.targets[:a],
                               self.images[a:b], self.targets[b:c])


def ring_points(n_points, center, axes, angle, harmonics=()):
    """Points at evenly spaced parameter angles on a rotated, perturbed ellipse.

    ``harmonics`` holds ``(order, amplitude, phase)`` radial modulations.
    """
    phi = 2 * np.pi * np.arange(n_points) / n_points
    radial = np.ones_like(phi)
    for order, amp, phase in harmonics:
        radial = radial + amp * np.sin(order * phi + phase)
    ex = axes[0] * np.cos(phi) * radial
    ey = axes[1] * np.sin(phi) * radial
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([center[0] + c * ex - s * ey, center[1] + s * ex + c * ey], axis=1)


def _splat(canvas, pts, weight, sigma=1.0):
    side = canvas.shape[0]
    grid = np.arange(side)
    gx = np.exp(-(grid[None, :] - pts[:, 0:1]) ** 2 / (2 * sigma ** 2))
    gy = np.exp(-(grid[None, :] - pts[:, 1:2]) ** 2 / (2 * sigma ** 2))
    canvas += weight * np.einsum("pi,pj->ij", gy, gx)


def render_ring(points, side, contour_samples=8):
    canvas = np.zeros((side, side))
    nxt = np.roll(points, -1, axis=0)
    t = (np.arange(1, contour_samples) / contour_samples)[None, :, None]
    contour = (points[:, None, :] * (1 - t) + nxt[:, None, :] * t).reshape(-1, 2)
    _splat(canvas, contour, 0.5)
    _splat(canvas, points, 1.0)
    return np.clip(canvas, 0.0, 1.0)


def gen_synthetic_landmarks(count, n_points=10, side=40, seed=0, perturbation=0.15,
                            noise=0.05) -> SyntheticLandmarkTask:
    """Images of deformed point rings with the generating points as targets."""
    if n_points < 4 or side < 16:
        raise ValueError("need n_points >= 4 and side >= 16")
    rng = np.random.default_rng(seed)
    images = np.empty((count, side * side))
    pts_all = np.empty((count, n_points, 2))
    for i in range(count):
        max_r = side * 0.28
        axes = rng.uniform(0.45, 1.0, size=2) * max_r
        center = side / 2 + rng.uniform(-0.05, 0.05, size=2) * side
        angle = rng.uniform(-np.pi / 6, np.pi / 6)
        harm = [(k, rng.uniform(-perturbation, perturbation), rng.uniform(0, 2 * np.pi))
                for k in (2, 3)] if perturbation else []
        pts = ring_points(n_points, center, axes, angle, harm)
        img = render_ring(pts, side)
        if noise:
            img = np.clip(img + noise * rng.random(img.shape), 0.0, 1.0)
        images[i] = img.ravel()
        pts_all[i] = pts
    targets = (pts_all / (side - 1) * 2.0 - 1.0).reshape(count, -1)
    if targets.min() < -1 or targets.max() > 1:
        raise AssertionError("landmark targets left [-1, 1]")
    return SyntheticLandmarkTask(images, targets, pts_all, side, (0, n_points // 2))


def write_manifest(path, kind, seed, **params) -> None:
    doc = {"kind": kind, "seed": seed, "parameters": params}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
