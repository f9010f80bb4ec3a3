"""Dataset loading and synthesis.

Covers the IDX container of the original MNIST distribution, the colorized
digit sets (biased training colors per class, one shared mean color for the
test set), the grayscale focusing map, a procedural digit generator usable
when no IDX files are at hand, a shapes-over-noise compositing set for the
opacity-blend strategy, binary PPM export, and the flat record container the
training tools persist paired datasets into.
"""

from __future__ import annotations

import colorsys
import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .rng import (
    TAG_BACKGROUND,
    TAG_COLOR,
    TAG_GLYPH,
    TAG_SHAPE,
    TAG_SUBSET,
    KeyedRng,
)
from .streams import PairedDataset

TRAIN_BIASED = "train-biased"
TEST_UNBIASED = "test-unbiased"

SIGMA2_CHOICES = (0.020, 0.025, 0.030, 0.035, 0.040, 0.045, 0.050)

IMAGE_MAGIC = 2051  # 0x00000803
LABEL_MAGIC = 2049  # 0x00000801


class IdxFormatError(ValueError):
    """IDX parse failure; carries the byte offset where it was detected."""

    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path} @ byte {offset}: {message}")
        self.offset = offset


class DataError(ValueError):
    """Dataset-level inconsistency (count mismatches, bad containers)."""


@dataclass
class RawMnist:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)


# ---------------------------------------------------------------------------
# IDX

def _read_be32(buf: bytes, offset: int, path, what: str) -> int:
    if offset + 4 > len(buf):
        raise IdxFormatError(path, offset, f"truncated while reading {what}")
    return struct.unpack_from(">i", buf, offset)[0]


def load_idx_images(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    magic = _read_be32(buf, 0, path, "magic")
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(path, 0, f"unexpected magic {magic} (want {IMAGE_MAGIC})")
    n = _read_be32(buf, 4, path, "image count")
    rows = _read_be32(buf, 8, path, "row count")
    cols = _read_be32(buf, 12, path, "column count")
    expected = 16 + n * rows * cols
    if len(buf) < expected:
        raise IdxFormatError(path, len(buf), f"truncated pixel data: have {len(buf)} bytes, need {expected}")
    return np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols).copy()


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    magic = _read_be32(buf, 0, path, "magic")
    if magic != LABEL_MAGIC:
        raise IdxFormatError(path, 0, f"unexpected magic {magic} (want {LABEL_MAGIC})")
    n = _read_be32(buf, 4, path, "label count")
    if len(buf) < 8 + n:
        raise IdxFormatError(path, len(buf), f"truncated labels: have {len(buf)} bytes, need {8 + n}")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8).copy()


def load_raw_mnist(images_path, labels_path) -> RawMnist:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    return RawMnist(images=images, labels=labels)


def write_idx_images(path, images: np.ndarray) -> None:
    """Inverse of load_idx_images, for fixtures and synthetic exports."""
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, n, rows, cols))
        f.write(np.ascontiguousarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# colorization

@dataclass(frozen=True)
class Palette:
    """Ten per-class mean colors plus the shared color-noise variance."""

    means: np.ndarray  # (10, 3) in [0, 1]
    sigma2: float
    seed: int

    def __post_init__(self):
        if self.means.shape != (10, 3):
            raise ValueError(f"palette needs 10 RGB means, got shape {self.means.shape}")
        # the published variance grid, plus 0 as the degenerate exact-tint case
        if self.sigma2 != 0.0 and not any(
            math.isclose(self.sigma2, s, abs_tol=1e-12) for s in SIGMA2_CHOICES
        ):
            raise ValueError(f"sigma2 {self.sigma2} not in {SIGMA2_CHOICES}")

    def mean_color(self) -> np.ndarray:
        return self.means.sum(axis=0) / 10.0


def make_palette(seed: int = 0, sigma2: float = 0.020) -> Palette:
    """Ten maximally separated hues (HSV, s = v = 1) as class means."""
    means = np.array([colorsys.hsv_to_rgb(i / 10.0, 1.0, 1.0) for i in range(10)])
    return Palette(means=means, sigma2=sigma2, seed=seed)


def sample_color(palette: Palette, label: int, split: str, rng: KeyedRng) -> np.ndarray:
    """One color draw: N(mean, sigma2 * I3), clamped to the unit cube."""
    if split == TRAIN_BIASED:
        mean = palette.means[label]
    elif split == TEST_UNBIASED:
        mean = palette.mean_color()
    else:
        raise ValueError(f"unknown split {split!r}")
    z = np.array(rng.normals(3))
    return np.clip(mean + math.sqrt(palette.sigma2) * z, 0.0, 1.0)


def colorize(image: np.ndarray, label: int, palette: Palette, split: str, rng: KeyedRng) -> np.ndarray:
    """Tint the digit foreground with a sampled color; background stays black.

    ``image`` is a (28, 28) uint8 intensity map; output is (3, 28, 28)
    float32 with channel k = intensity / 255 * c_k.
    """
    c = sample_color(palette, label, split, rng)
    intensity = image.astype(np.float64) / 255.0
    return (intensity[None, :, :] * c[:, None, None]).astype(np.float32)


def to_grayscale(colored: np.ndarray) -> np.ndarray:
    """Channel mean replicated into all channels; dtype-preserving.

    Accepts (3, H, W) or a batch (N, 3, H, W).
    """
    axis = colored.ndim - 3
    if colored.shape[axis] != 3:
        raise ValueError(f"expected 3 channels at axis {axis}, got shape {colored.shape}")
    g = colored.mean(axis=axis, keepdims=True, dtype=np.float64)
    return np.repeat(g, 3, axis=axis).astype(colored.dtype)


@dataclass
class ColoredMnistSet:
    pairs: PairedDataset  # x1 = colorized, x0 = grayscale of x1
    split: str
    palette: Palette

    def __len__(self) -> int:
        return len(self.pairs)


def colorize_subset(raw: RawMnist, indices: np.ndarray, palette: Palette, split: str) -> PairedDataset:
    n = len(indices)
    x1 = np.empty((n, 3, 28, 28), dtype=np.float32)
    split_tag = 0 if split == TRAIN_BIASED else 1
    for row, i in enumerate(indices):
        rng = KeyedRng(palette.seed, TAG_COLOR, split_tag, int(i))
        x1[row] = colorize(raw.images[i], int(raw.labels[i]), palette, split, rng)
    return PairedDataset(x0=to_grayscale(x1), x1=x1, labels=raw.labels[indices].astype(np.int64))


def build_colored_mnist(
    raw: RawMnist,
    palette: Palette,
    train_size: int,
    test_size: int,
    seed: int = 0,
) -> tuple[ColoredMnistSet, ColoredMnistSet]:
    """Disjoint train/test subsets; class-mean colors for train, the global
    mean color for test.  Fully deterministic in (raw, palette, sizes, seed).
    """
    if train_size + test_size > len(raw):
        raise DataError(f"need {train_size}+{test_size} items but raw set has {len(raw)}")
    perm = np.asarray(KeyedRng(seed, TAG_SUBSET).shuffled(len(raw)), dtype=np.int64)
    train_idx = perm[:train_size]
    test_idx = perm[train_size : train_size + test_size]
    train = ColoredMnistSet(colorize_subset(raw, train_idx, palette, TRAIN_BIASED), TRAIN_BIASED, palette)
    test = ColoredMnistSet(colorize_subset(raw, test_idx, palette, TEST_UNBIASED), TEST_UNBIASED, palette)
    return train, test


# ---------------------------------------------------------------------------
# bias oracle

def foreground_color(image: np.ndarray) -> np.ndarray:
    """Estimated tint color of a black-background multiplicatively tinted
    image: the color of its brightest pixel.

    Wherever the glyph saturates (intensity 255) the pixel equals the clamped
    tint exactly, so the estimate is noise-free for typical digit images.
    """
    img = np.asarray(image, dtype=np.float64).reshape(3, -1)
    return img[:, int(np.argmax(img.sum(axis=0)))]


def nearest_mean_color_accuracy(pairs: PairedDataset, palette: Palette) -> float:
    """Accuracy of classifying by the nearest class-mean color.

    High on the biased training set and near chance on the unbiased test set;
    this is the operational check that the color bias exists / is absent.
    """
    hits = 0
    for i in range(len(pairs)):
        color = foreground_color(pairs.x1[i])
        pred = int(np.argmin(((palette.means - color) ** 2).sum(axis=1)))
        hits += pred == int(pairs.labels[i])
    return hits / len(pairs)


# ---------------------------------------------------------------------------
# procedural digit glyphs (MNIST stand-in when no IDX files are supplied)

def _digit_polylines() -> dict[int, list[list[tuple[float, float]]]]:
    """Canonical stroke paths per digit on the unit square (y grows down)."""

    def ring(cx, cy, rx, ry, n=14, start=0.0, sweep=2 * math.pi):
        pts = []
        for t in range(n + 1):
            a = start + sweep * t / n
            pts.append((cx + rx * math.sin(a), cy - ry * math.cos(a)))
        return pts

    return {
        0: [ring(0.5, 0.5, 0.26, 0.40)],
        1: [[(0.34, 0.26), (0.54, 0.10), (0.54, 0.90)]],
        2: [
            [(0.24, 0.30), (0.28, 0.14), (0.50, 0.08), (0.72, 0.14), (0.76, 0.32),
             (0.66, 0.50), (0.24, 0.90), (0.78, 0.90)]
        ],
        3: [
            [(0.26, 0.14), (0.52, 0.08), (0.74, 0.22), (0.56, 0.44), (0.40, 0.47)],
            [(0.40, 0.47), (0.62, 0.50), (0.78, 0.68), (0.58, 0.90), (0.26, 0.86)],
        ],
        4: [[(0.64, 0.90), (0.64, 0.10), (0.22, 0.62), (0.82, 0.62)]],
        5: [
            [(0.74, 0.10), (0.30, 0.10), (0.27, 0.44), (0.55, 0.40), (0.76, 0.56),
             (0.70, 0.82), (0.40, 0.92), (0.24, 0.84)]
        ],
        6: [
            [(0.66, 0.10), (0.42, 0.26), (0.29, 0.52), (0.30, 0.76), (0.48, 0.91),
             (0.68, 0.80), (0.70, 0.60), (0.52, 0.50), (0.32, 0.58)]
        ],
        7: [[(0.22, 0.10), (0.78, 0.10), (0.44, 0.90)]],
        8: [ring(0.5, 0.30, 0.20, 0.21), ring(0.5, 0.71, 0.24, 0.22)],
        9: [ring(0.47, 0.32, 0.21, 0.23), [(0.68, 0.34), (0.66, 0.62), (0.56, 0.90)]],
    }


_GLYPHS = _digit_polylines()
_GRID = None


def _pixel_grid(side: int = 28) -> np.ndarray:
    global _GRID
    if _GRID is None or _GRID.shape[0] != side * side:
        centers = (np.arange(side) + 0.5) / side
        xx, yy = np.meshgrid(centers, centers)
        _GRID = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return _GRID


def _segment_distances(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Min distance from each grid point to any segment. (P,2),(S,2),(S,2)."""
    d = seg_b - seg_a  # (S, 2)
    len2 = (d**2).sum(axis=1)
    len2[len2 == 0.0] = 1e-12
    rel = points[:, None, :] - seg_a[None, :, :]  # (P, S, 2)
    t = np.clip((rel * d[None]).sum(axis=2) / len2[None], 0.0, 1.0)
    proj = seg_a[None] + t[..., None] * d[None]
    return np.sqrt(((points[:, None, :] - proj) ** 2).sum(axis=2)).min(axis=1)


def render_glyph(digit: int, rng: KeyedRng, side: int = 28) -> np.ndarray:
    """One jittered anti-aliased digit as a (side, side) uint8 intensity map.

    The jitter is deliberately strong (rotation, anisotropic scale, shear,
    translation, stroke width, per-vertex wobble) so that shape
    classification stays a real learning task rather than a lookup.
    """
    angle = (rng.uniform() - 0.5) * 0.66
    shear = (rng.uniform() - 0.5) * 0.56
    sx = 0.62 + 0.52 * rng.uniform()
    sy = 0.62 + 0.52 * rng.uniform()
    tx = (rng.uniform() - 0.5) * 0.22
    ty = (rng.uniform() - 0.5) * 0.22
    halfwidth = (0.85 + 1.15 * rng.uniform()) / side
    wobble = 0.022

    ca, sa = math.cos(angle), math.sin(angle)
    segs_a, segs_b = [], []
    for path in _GLYPHS[digit]:
        pts = []
        for x, y in path:
            # center, wobble, shear, scale, rotate, translate
            px = (x - 0.5 + (rng.uniform() - 0.5) * 2 * wobble) * sx
            py = (y - 0.5 + (rng.uniform() - 0.5) * 2 * wobble) * sy
            px += shear * py
            qx = ca * px - sa * py + 0.5 + tx
            qy = sa * px + ca * py + 0.5 + ty
            pts.append((qx, qy))
        segs_a.extend(pts[:-1])
        segs_b.extend(pts[1:])

    dist = _segment_distances(_pixel_grid(side), np.array(segs_a), np.array(segs_b))
    aa = 0.9 / side
    value = np.clip((halfwidth + aa - dist) / aa, 0.0, 1.0).reshape(side, side)

    # occlude a rectangle so shape classification keeps an irreducible
    # difficulty; undone when it would wipe every saturated stroke pixel
    rh = 6 + rng.below(8)
    rw = 6 + rng.below(8)
    ry = rng.below(side - rh + 1)
    rx = rng.below(side - rw + 1)
    patch = value[ry : ry + rh, rx : rx + rw].copy()
    value[ry : ry + rh, rx : rx + rw] = 0.0
    if value.max() < 1.0:
        value[ry : ry + rh, rx : rx + rw] = patch
    return np.rint(value * 255.0).astype(np.uint8)


def synthetic_digits(n: int, seed: int = 0) -> RawMnist:
    """Deterministic MNIST-shaped stand-in: jittered procedural digit glyphs."""
    images = np.empty((n, 28, 28), dtype=np.uint8)
    labels = (np.arange(n) % 10).astype(np.uint8)
    for i in range(n):
        images[i] = render_glyph(int(labels[i]), KeyedRng(seed, TAG_GLYPH, i))
    return RawMnist(images=images, labels=labels)


# ---------------------------------------------------------------------------
# shapes over noise backgrounds (compositing demo set)

COMPOSITE_CLASSES = ("disk", "square", "triangle", "cross")


def _value_noise(rng: KeyedRng, side: int = 28, cells: int = 4) -> np.ndarray:
    """Smooth (3, side, side) background: bilinear upsampling of a coarse grid."""
    grid = np.array([rng.uniform() for _ in range(3 * (cells + 1) ** 2)]).reshape(3, cells + 1, cells + 1)
    pos = np.linspace(0.0, cells, side)
    i0 = np.clip(pos.astype(np.int64), 0, cells - 1)
    frac = pos - i0
    def lerp_axis(g, axis):
        lo = np.take(g, i0, axis=axis)
        hi = np.take(g, i0 + 1, axis=axis)
        shape = [1, 1, 1]
        shape[axis] = side
        f = frac.reshape(shape)
        return lo * (1.0 - f) + hi * f
    return lerp_axis(lerp_axis(grid, 1), 2)


def _shape_mask(kind: str, rng: KeyedRng, side: int = 28) -> np.ndarray:
    """Anti-aliased coverage in [0, 1] for one jittered shape."""
    cx = 0.5 + (rng.uniform() - 0.5) * 0.3
    cy = 0.5 + (rng.uniform() - 0.5) * 0.3
    r = 0.16 + 0.12 * rng.uniform()
    rot = rng.uniform() * 2 * math.pi
    pts = _pixel_grid(side) - np.array([cx, cy])
    ca, sa = math.cos(rot), math.sin(rot)
    x = ca * pts[:, 0] - sa * pts[:, 1]
    y = sa * pts[:, 0] + ca * pts[:, 1]
    if kind == "disk":
        sd = np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2) - r
    elif kind == "square":
        sd = np.maximum(np.abs(x), np.abs(y)) - r
    elif kind == "triangle":
        # equilateral, point up: intersection of three half-planes
        k = math.sqrt(3.0)
        d1 = y - r * 0.5
        d2 = k * 0.5 * x - 0.5 * y - r * 0.5
        d3 = -k * 0.5 * x - 0.5 * y - r * 0.5
        sd = np.maximum(np.maximum(d1, d2), d3)
    elif kind == "cross":
        bar = 0.38 * r
        h = np.maximum(np.abs(x) - r, np.abs(y) - bar)
        v = np.maximum(np.abs(x) - bar, np.abs(y) - r)
        sd = np.minimum(h, v)
    else:
        raise ValueError(f"unknown shape {kind!r}")
    aa = 1.0 / side
    return np.clip(0.5 - sd / aa, 0.0, 1.0).reshape(side, side)


def make_composite_set(n: int, seed: int = 0) -> PairedDataset:
    """Shapes on black (x0) vs the same shapes over smooth noise (x1).

    Classes cycle round-robin through disk / square / triangle / cross, so
    class counts are exactly balanced whenever n is a multiple of 4.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    x0 = np.empty((n, 3, 28, 28), dtype=np.float32)
    x1 = np.empty((n, 3, 28, 28), dtype=np.float32)
    labels = (np.arange(n) % len(COMPOSITE_CLASSES)).astype(np.int64)
    for i in range(n):
        rng = KeyedRng(seed, TAG_SHAPE, i)
        mask = _shape_mask(COMPOSITE_CLASSES[labels[i]], rng)
        color = np.array([0.35 + 0.65 * rng.uniform() for _ in range(3)])
        fg = mask[None, :, :] * color[:, None, None]
        bg = _value_noise(KeyedRng(seed, TAG_BACKGROUND, i))
        x0[i] = fg
        x1[i] = fg + (1.0 - mask[None, :, :]) * bg
    return PairedDataset(x0=x0, x1=x1, labels=labels)


# ---------------------------------------------------------------------------
# PPM export and the flat dataset container

def write_ppm(image: np.ndarray, path) -> None:
    """Binary PPM (P6, maxval 255); values are round(v * 255)."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"need a (3, H, W) image, got shape {image.shape}")
    _, h, w = image.shape
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.transpose(1, 2, 0).tobytes())


def image_grid(images: np.ndarray, cols: int = 10, pad: int = 1) -> np.ndarray:
    """Tile a (K, 3, H, W) stack into one (3, H', W') inspection image."""
    k, c, h, w = images.shape
    rows = (k + cols - 1) // cols
    out = np.zeros((c, rows * (h + pad) + pad, cols * (w + pad) + pad))
    for i in range(k):
        r, q = divmod(i, cols)
        out[:, pad + r * (h + pad) : pad + r * (h + pad) + h, pad + q * (w + pad) : pad + q * (w + pad) + w] = images[i]
    return out


def _record_dtype(shape: tuple[int, int, int]) -> np.dtype:
    return np.dtype([("label", "u1"), ("x0", "<f4", shape), ("x1", "<f4", shape)])


def save_paired(pairs: PairedDataset, path) -> str:
    """Write the flat record container; returns the content's SHA-256 hex.

    Layout: little-endian uint32 item count, then per item one label byte
    followed by the focused and full images as little-endian float32.
    """
    shape = pairs.x0.shape[1:]
    records = np.empty(len(pairs), dtype=_record_dtype(shape))
    records["label"] = pairs.labels.astype(np.uint8)
    records["x0"] = pairs.x0.astype("<f4")
    records["x1"] = pairs.x1.astype("<f4")
    payload = struct.pack("<I", len(pairs)) + records.tobytes()
    with open(path, "wb") as f:
        f.write(payload)
    return hashlib.sha256(payload).hexdigest()


def load_paired(path, shape: tuple[int, int, int] = (3, 28, 28)) -> PairedDataset:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 4:
        raise DataError(f"{path}: truncated header")
    (count,) = struct.unpack_from("<I", buf, 0)
    dtype = _record_dtype(shape)
    expected = 4 + count * dtype.itemsize
    if len(buf) != expected:
        raise DataError(f"{path}: {len(buf)} bytes but {count} items of shape {shape} need {expected}")
    records = np.frombuffer(buf, dtype=dtype, count=count, offset=4)
    return PairedDataset(
        x0=records["x0"].astype(np.float32),
        x1=records["x1"].astype(np.float32),
        labels=records["label"].astype(np.int64),
    )
