"""Dataset ingestion, sequence construction, synthesis, and protocols.

A dataset directory holds a ``meta.csv`` (columns file, classId, serial,
depressionDeg, aspectDeg) plus binary P5 graymap images, 8- or 16-bit.
Images are normalized by the format's max value so a stored maxval pixel
reads back as intensity exactly 1.0.

The synthetic generator renders point scatterers whose amplitude varies
with aspect angle, which stands in for the aspect dependence of real
backscatter: two classes can share a signature at some aspects yet differ
over a full sweep, so sequence context genuinely helps.
"""

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .numkit import Rng, derive_seed

META_COLUMNS = ["file", "classId", "serial", "depressionDeg", "aspectDeg"]


@dataclass
class AspectImage:
    """One calibrated target chip with its acquisition metadata."""

    pixels: np.ndarray   # (rows, cols) float64 in [0, 1]
    aspect_deg: float
    depression_deg: float
    class_id: int
    serial: str = ""
    source: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("pixels must be a nonempty 2-D array")
        if not 0.0 <= self.aspect_deg < 360.0:
            raise ValueError(f"aspect {self.aspect_deg} out of [0, 360)")

    def group_key(self):
        return (self.class_id, self.serial, self.depression_deg)


# ---------------------------------------------------------------------------
# portable graymap (P5) I/O


def write_pgm(path, pixels, maxval=65535):
    """Write [0, 1] intensities as a binary P5 graymap (8- or 16-bit)."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    pixels = np.asarray(pixels, dtype=np.float64)
    quantized = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    rows, cols = pixels.shape
    header = f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quantized.astype(dtype).tobytes())


def read_pgm(path):
    """Read a binary P5 graymap; returns intensities scaled by its maxval."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary P5 graymap")
    # header: magic, width, height, maxval as whitespace-separated tokens
    # with '#' comments; payload starts after the single byte following maxval
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos: pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos: pos + 1] == b"#":
            while pos < len(data) and data[pos: pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos: pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated graymap header")
        tokens.append(data[start: pos])
    pos += 1  # single whitespace byte after maxval
    try:
        cols, rows, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed graymap header") from exc
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    count = rows * cols
    raw = np.frombuffer(data, dtype=dtype, count=-1, offset=pos)
    if raw.size < count:
        raise ValueError(f"{path}: truncated pixel payload")
    return raw[:count].astype(np.float64).reshape(rows, cols) / float(maxval)


def load_dataset(directory):
    """Read meta.csv and its referenced graymaps into AspectImages."""
    from pathlib import Path

    directory = Path(directory)
    meta = directory / "meta.csv"
    if not meta.is_file():
        raise ValueError(f"{meta}: missing meta.csv")
    images = []
    with open(meta, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != META_COLUMNS:
            raise ValueError(f"{meta}: header must be {','.join(META_COLUMNS)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(META_COLUMNS):
                raise ValueError(f"{meta}:{line_no}: expected "
                                 f"{len(META_COLUMNS)} columns, got {len(row)}")
            fname, class_id, serial, depression, aspect = row
            try:
                class_id = int(class_id)
                depression = float(depression)
                aspect = float(aspect)
            except ValueError as exc:
                raise ValueError(f"{meta}:{line_no}: malformed value") from exc
            if not 0.0 <= aspect < 360.0:
                raise ValueError(f"{meta}:{line_no}: aspect {aspect} "
                                 f"out of [0, 360)")
            img_path = directory / fname
            if not img_path.is_file():
                raise ValueError(f"{meta}:{line_no}: missing image {img_path}")
            images.append(AspectImage(pixels=read_pgm(img_path),
                                      aspect_deg=aspect,
                                      depression_deg=depression,
                                      class_id=class_id,
                                      serial=serial,
                                      source=str(fname)))
    return images


# ---------------------------------------------------------------------------
# sequence construction


@dataclass
class RawSequenceSet:
    """Per (classId, serial, depression) group: the constructed sweeps."""

    groups: dict  # group key -> list of list[AspectImage]

    def iter_sequences(self):
        for key in sorted(self.groups):
            for seq in self.groups[key]:
                yield key, seq


def build_sequences(images, circles=4):
    """Split each target group into full-circle sweeps plus a remainder.

    Within a group the images are sorted by aspect; the j-th image of every
    duplicate-aspect cluster goes to sweep j (j < circles), so the first
    `circles` sweeps each cover the whole circle when the data allows, and
    all remaining duplicates form one final sequence. Empty sweeps are
    dropped; each output sequence is aspect-sorted.
    """
    if circles < 1:
        raise ValueError("circles must be >= 1")
    groups = {}
    for img in images:
        groups.setdefault(img.group_key(), []).append(img)
    out = {}
    for key, members in groups.items():
        if not members:
            raise ValueError(f"empty image group {key}")
        members = sorted(members, key=lambda im: (im.aspect_deg, im.source))
        buckets = [[] for _ in range(circles + 1)]
        cluster_start = 0
        for idx, img in enumerate(members):
            if img.aspect_deg != members[cluster_start].aspect_deg:
                cluster_start = idx
            j = idx - cluster_start
            buckets[min(j, circles)].append(img)
        out[key] = [b for b in buckets if b]
    return RawSequenceSet(groups=out)


# ---------------------------------------------------------------------------
# synthetic multi-aspect targets


@dataclass(frozen=True)
class Scatterer:
    """Point scatterer: image offset from center, peak amplitude, preferred
    aspect, and the angular width of its visibility lobe."""

    dy: float
    dx: float
    amplitude: float
    pref_aspect_deg: float
    width_deg: float

    def amplitude_at(self, aspect_deg):
        """Closed-form aspect profile: wrapped Gaussian lobe around the
        preferred aspect (width inf gives an aspect-independent return)."""
        delta = (aspect_deg - self.pref_aspect_deg + 180.0) % 360.0 - 180.0
        if math.isinf(self.width_deg):
            return self.amplitude
        return self.amplitude * math.exp(-delta * delta
                                         / (2.0 * self.width_deg ** 2))


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic dataset description; scatterers[c] lists class c's set.

    images_per_class aspect samples are spread evenly over [0, 360) and the
    whole sweep is rendered `sweeps` times with fresh speckle, mimicking
    repeated passes over the same target. clutter is a constant background
    reflectivity under the multiplicative speckle, so faint lobes sink into
    the background texture instead of standing out against exact zero.
    """

    class_count: int
    images_per_class: int
    image_size: int
    scatterers: tuple  # tuple per class of tuple[Scatterer]
    speckle: float = 0.3
    clutter: float = 0.0
    sweeps: int = 1
    blob_sigma: float = 2.5
    depression_deg: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if len(self.scatterers) != self.class_count:
            raise ValueError("one scatterer set per class required")
        if len(set(self.scatterers)) != self.class_count:
            raise ValueError("scatterer sets must be pairwise distinct")
        if self.images_per_class < 1:
            raise ValueError("images_per_class must be >= 1")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")
        if self.speckle < 0:
            raise ValueError("speckle must be >= 0")
        if self.clutter < 0:
            raise ValueError("clutter must be >= 0")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")


def confusable_spec(images_per_class=60, image_size=64, speckle=0.3,
                    sweeps=1, seed=0):
    """Four classes built to be pairwise ambiguous at some aspects.

    Classes 0/1 share three scatterers peaking at 45 deg and differ only in
    three scatterers peaking at 225 deg; classes 2/3 likewise at 135 vs
    315 deg. The 40-degree lobes decay so far across the circle (exp(-10)
    at the opposite aspect) that near the shared lobe the pairs are
    effectively identical, so single-image classification is ambiguous
    there while a sweep separates them; all the ambiguity sits in [0, 180)
    and its resolution in [180, 360).
    """

    def lobe(points, pref, amps=(1.5, 1.5, 1.5)):
        return tuple(Scatterer(dy, dx, amp, pref, 40.0)
                     for (dy, dx), amp in zip(points, amps))

    # the "own" sets differ in position and slightly in total amplitude, so
    # the closed-form sweep energy profiles of a confusable pair differ too
    shared01 = lobe([(-10, -8), (-4, -13), (3, 6)], 45.0)
    own0 = lobe([(9, 11), (4, -3), (-2, 14)], 225.0)
    own1 = lobe([(12, 3), (-6, -2), (7, -9)], 225.0, amps=(1.2, 1.4, 1.8))
    shared23 = lobe([(12, -9), (-8, 2), (1, -14)], 135.0)
    own2 = lobe([(9, 11), (4, -3), (-2, 14)], 315.0)
    own3 = lobe([(12, 3), (-6, -2), (7, -9)], 315.0, amps=(1.2, 1.4, 1.8))
    return SynthSpec(
        class_count=4,
        images_per_class=images_per_class,
        image_size=image_size,
        scatterers=(shared01 + own0, shared01 + own1,
                    shared23 + own2, shared23 + own3),
        speckle=speckle,
        clutter=0.03,
        sweeps=sweeps,
        blob_sigma=0.9,
        seed=seed,
    )


def _render_chip(spec, class_id, aspect_deg, rng):
    size = spec.image_size
    center = (size - 1) / 2.0
    rr, cc = np.mgrid[0:size, 0:size].astype(np.float64)
    reflectivity = np.full((size, size), spec.clutter)
    for sc in spec.scatterers[class_id]:
        amp = sc.amplitude_at(aspect_deg)
        if amp == 0.0:
            continue
        d2 = (rr - (center + sc.dy)) ** 2 + (cc - (center + sc.dx)) ** 2
        reflectivity += amp * np.exp(-d2 / (2.0 * spec.blob_sigma ** 2))
    if spec.speckle > 0:
        noise = rng.exponential(reflectivity.shape)
        reflectivity = reflectivity * ((1.0 - spec.speckle)
                                       + spec.speckle * noise)
    # tone-map [0, inf) -> [0, 1); strictly monotone, so relative structure
    # survives and the intensity invariant holds without clipping
    return 1.0 - np.exp(-reflectivity)


def synth_generate(spec):
    """Render the synthetic dataset: one chip per (class, sweep, aspect).

    Aspects are evenly spaced over [0, 360) and repeat across sweeps. Each
    chip draws from an independent child stream keyed by (class, sweep,
    aspect index), so the dataset is a pure function of the spec.
    """
    images = []
    for class_id in range(spec.class_count):
        for sweep in range(spec.sweeps):
            for j in range(spec.images_per_class):
                aspect = 360.0 * j / spec.images_per_class
                rng = Rng(derive_seed(spec.seed, class_id, sweep, j))
                pixels = _render_chip(spec, class_id, aspect, rng)
                images.append(AspectImage(
                    pixels=pixels,
                    aspect_deg=aspect,
                    depression_deg=spec.depression_deg,
                    class_id=class_id,
                    serial=f"S{class_id}",
                    source=f"c{class_id}_s{sweep}_{j:04d}.pgm",
                ))
    return images


# ---------------------------------------------------------------------------
# experiment protocols


def contaminate(img, level, seed):
    """Replace floor(level * pixels) distinct pixels with uniform [0, 1) draws.

    Pixel selection comes first in the stream (one key per pixel, smallest
    floor(level*N) keys win), then one value per replaced pixel in ascending
    pixel index; this fixed draw order makes noise runs reproducible.
    """
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"noise level {level} out of [0, 1]")
    n = img.pixels.size
    k = int(math.floor(level * n))
    if k == 0:
        return img
    rng = Rng(seed)
    chosen = rng.sample(n, k)
    values = rng.uniform(k)
    pixels = img.pixels.copy()
    pixels.reshape(-1)[chosen] = values
    return replace(img, pixels=pixels)


def subsample_aspects(seq, range_deg, interval_deg):
    """Keep images inside [lo, hi) whose aspects are >= interval_deg apart.

    Greedy in input order: the first in-range image is kept, each later one
    only if its aspect is at least interval_deg past the last kept aspect.
    The upper bound is exclusive so a 0-180 protocol covers exactly half the
    circle. May return an empty list; the caller decides how to react.
    """
    lo, hi = range_deg
    if not lo < hi:
        raise ValueError("aspect range must satisfy lo < hi")
    if interval_deg <= 0:
        raise ValueError("interval must be positive")
    kept = []
    last = None
    for img in seq:
        if not lo <= img.aspect_deg < hi:
            continue
        if last is None or img.aspect_deg - last >= interval_deg:
            kept.append(img)
            last = img.aspect_deg
    return kept


def per_class_subset(images, fraction, seed):
    """Keep a uniform random fraction of each class's images (>= 1 kept).

    Selection draws one child stream per class, keyed by class id, so the
    subset is independent of image order across classes.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    by_class = {}
    for idx, img in enumerate(images):
        by_class.setdefault(img.class_id, []).append(idx)
    keep = []
    for class_id in sorted(by_class):
        idxs = by_class[class_id]
        k = max(1, int(math.floor(fraction * len(idxs))))
        rng = Rng(derive_seed(seed, class_id))
        chosen = rng.sample(len(idxs), k)
        keep.extend(idxs[i] for i in chosen)
    return [images[i] for i in sorted(keep)]
