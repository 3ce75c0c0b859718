"""Procedural multi-attribute glyph images and nuisance-biased benchmarks.

Each sample has a nuisance label (rendering domain), a primary relevant
class (glyph shape) and two secondary relevant attributes (glyph size and a
position jitter cell). Benchmarks follow the pseudo-anomaly protocol: a few
(domain, class) cells are withheld from training and only appear at test
time, alongside held-out classes that are true anomalies.
"""
import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

log = logging.getLogger(__name__)

ROLES = ("train_normal", "test_familiar", "test_pseudo", "test_anomaly")
MANIFEST_HEADER = ["filename", "id", "nuisance", "class", "aux1", "aux2", "role"]

GLYPHS = ("disk", "square", "triangle", "plus", "cross", "ring", "diamond",
          "dots", "bar", "tee")
DOMAINS = ("photo", "sketch", "inverted", "textured")
N_SIZES = 3
N_JITTER = 9


class BenchmarkError(ValueError):
    pass


# ------------------------------------------------------------------ rendering

def _glyph_mask(cls, u, v):
    r2 = u * u + v * v
    au, av = np.abs(u), np.abs(v)
    if cls == 0:
        return r2 <= 1.0
    if cls == 1:
        return np.maximum(au, av) <= 0.85
    if cls == 2:
        return (v <= 0.85) & (au <= 0.5 * (v + 0.95))
    if cls == 3:
        return ((au <= 0.3) & (av <= 0.95)) | ((av <= 0.3) & (au <= 0.95))
    if cls == 4:
        inside = np.maximum(au, av) <= 0.9
        return inside & ((np.abs(u - v) <= 0.4) | (np.abs(u + v) <= 0.4))
    if cls == 5:
        return (r2 <= 1.0) & (r2 >= 0.55 ** 2)
    if cls == 6:
        return au + av <= 1.0
    if cls == 7:
        return ((u - 0.5) ** 2 + v * v <= 0.42 ** 2) | ((u + 0.5) ** 2 + v * v <= 0.42 ** 2)
    if cls == 8:
        return (av <= 0.35) & (au <= 0.95)
    if cls == 9:
        return ((np.abs(v + 0.7) <= 0.25) & (au <= 0.95)) | ((au <= 0.25) & (v >= -0.7) & (v <= 0.95))
    raise ValueError(f"unknown glyph class {cls}")


def render_sample(relevant_labels, nuisance_label, seed, image_size=64):
    """Render one H x W x 3 float32 image with values on the 1/255 grid.

    ``relevant_labels`` is ``(glyph_class, size_level, jitter_cell)``. The
    nuisance label picks the rendering style; ``seed`` drives the small
    per-sample colour and texture variation. Output is a deterministic
    function of the arguments.
    """
    cls, size_level, jitter = (tuple(relevant_labels) + (1, 4))[:3]
    if not 0 <= cls < len(GLYPHS):
        raise ValueError(f"glyph class {cls} out of range [0, {len(GLYPHS)})")
    if not 0 <= nuisance_label < len(DOMAINS):
        raise ValueError(f"nuisance label {nuisance_label} out of range [0, {len(DOMAINS)})")
    if not 0 <= size_level < N_SIZES or not 0 <= jitter < N_JITTER:
        raise ValueError(f"secondary labels ({size_level}, {jitter}) out of range")
    if image_size < 16:
        raise ValueError(f"image_size must be >= 16, got {image_size}")

    rng = np.random.default_rng([int(seed), cls, nuisance_label, size_level, jitter])
    ss = 2
    n = image_size * ss
    coords = (np.arange(n) + 0.5) / n
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    half = (0.24, 0.30, 0.36)[size_level]
    cy = 0.5 + 0.09 * (jitter // 3 - 1)
    cx = 0.5 + 0.09 * (jitter % 3 - 1)
    mask_hi = _glyph_mask(cls, (xx - cx) / half, (yy - cy) / half)

    if nuisance_label == 1:
        width = max(1, int(round(n * 0.025)))
        mask_hi = mask_hi & ~ndimage.binary_erosion(mask_hi, iterations=width, border_value=0)
    mask = mask_hi.reshape(image_size, ss, image_size, ss).mean(axis=(1, 3))[..., None]

    tint = rng.uniform(-0.06, 0.06, size=3)
    if nuisance_label == 0:
        bg = np.full((image_size, image_size, 3), 0.12) + tint * 0.5
        shade = np.linspace(1.0, 0.7, image_size)[:, None, None]
        fg = (np.array([0.95, 0.62, 0.22]) + tint) * shade
    elif nuisance_label == 1:
        bg = np.full((image_size, image_size, 3), 0.96)
        fg = np.full(3, 0.08) + tint * 0.5
    elif nuisance_label == 2:
        bg = np.broadcast_to(np.array([0.30, 0.50, 0.95]) + tint, (image_size, image_size, 3))
        fg = np.zeros(3)
    else:
        period = 6.0 * image_size / 64
        phase = rng.uniform(0, period)
        idx = np.arange(image_size)
        stripes = ((idx[:, None] + idx[None, :] + phase) % period) < period / 2
        bg = np.where(stripes[..., None], [0.15, 0.55, 0.25], [0.35, 0.75, 0.40]) + tint
        fg = np.array([0.97, 0.97, 0.90])
    img = bg * (1.0 - mask) + fg * mask
    return from_uint8(to_uint8(img))


def to_uint8(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(pixels):
    """Map 8-bit pixels to float32 intensities; inverse of :func:`to_uint8`."""
    return (pixels.astype(np.float64) / 255.0).astype(np.float32)


# ------------------------------------------------------------------ samples

@dataclass(eq=False)
class LabeledSample:
    id: str
    nuisance: int
    relevant: tuple
    role: str
    image: np.ndarray = None

    @property
    def cls(self):
        return self.relevant[0]

    @property
    def is_anomaly(self):
        return self.role == "test_anomaly"

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        if (self.id, self.nuisance, tuple(self.relevant), self.role) != (
                other.id, other.nuisance, tuple(other.relevant), other.role):
            return False
        if self.image is None or other.image is None:
            return self.image is None and other.image is None
        return self.image.shape == other.image.shape and np.array_equal(self.image, other.image)


@dataclass
class BenchmarkSpec:
    domains: int = 4
    classes: int = 10
    per_cell: int = 60
    anomaly_classes: tuple = (8, 9)
    pseudo_pairs: tuple = ((0, 1), (1, 3), (2, 5), (3, 7))
    train_fraction: float = 0.85
    seed: int = 0
    image_size: int = 64

    def __post_init__(self):
        self.anomaly_classes = tuple(sorted(int(c) for c in self.anomaly_classes))
        self.pseudo_pairs = tuple((int(d), int(c)) for d, c in self.pseudo_pairs)

    def validate(self):
        if self.domains < 2:
            raise BenchmarkError(f"need at least 2 nuisance domains, got {self.domains}")
        if self.classes < 4:
            raise BenchmarkError(f"need at least 4 relevant classes, got {self.classes}")
        if self.per_cell < 1:
            raise BenchmarkError(f"per_cell must be >= 1, got {self.per_cell}")
        if not 0.0 < self.train_fraction < 1.0:
            raise BenchmarkError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        for c in self.anomaly_classes:
            if not 0 <= c < self.classes:
                raise BenchmarkError(f"anomaly class {c} out of range")
        for d, c in self.pseudo_pairs:
            if not 0 <= d < self.domains or not 0 <= c < self.classes:
                raise BenchmarkError(f"pseudo pair ({d}, {c}) out of range")
        overlap = set(self.anomaly_classes) & {c for _, c in self.pseudo_pairs}
        if overlap:
            raise BenchmarkError(f"classes {sorted(overlap)} are both true anomalies and pseudo-anomalies")
        pseudo = set(self.pseudo_pairs)
        normal = [c for c in range(self.classes) if c not in self.anomaly_classes]
        for d in range(self.domains):
            if not any((d, c) not in pseudo for c in normal):
                raise BenchmarkError(f"domain {d} has no training classes left")

    # flat key=value text form
    def to_text(self):
        lines = [
            f"domains={self.domains}",
            f"classes={self.classes}",
            f"per_cell={self.per_cell}",
            "anomaly_classes=" + ",".join(str(c) for c in self.anomaly_classes),
            "pseudo_pairs=" + ",".join(f"{d}:{c}" for d, c in self.pseudo_pairs),
            f"train_fraction={self.train_fraction!r}",
            f"seed={self.seed}",
            f"image_size={self.image_size}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise BenchmarkError(f"malformed line in benchmark spec: {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            kv[key] = value
        return cls.from_mapping(kv)

    @classmethod
    def from_mapping(cls, kv):
        known = {"domains", "classes", "per_cell", "anomaly_classes", "pseudo_pairs",
                 "train_fraction", "seed", "image_size"}
        unknown = set(kv) - known
        if unknown:
            raise BenchmarkError(f"unknown benchmark keys: {sorted(unknown)}")
        args = {}
        for key in ("domains", "classes", "per_cell", "seed", "image_size"):
            if key in kv:
                args[key] = int(kv[key])
        if "train_fraction" in kv:
            args["train_fraction"] = float(kv["train_fraction"])
        if "anomaly_classes" in kv:
            args["anomaly_classes"] = tuple(int(c) for c in _split_list(kv["anomaly_classes"]))
        if "pseudo_pairs" in kv:
            pairs = []
            for item in _split_list(kv["pseudo_pairs"]):
                d, c = item.split(":")
                pairs.append((int(d), int(c)))
            args["pseudo_pairs"] = tuple(pairs)
        return cls(**args)


def _split_list(value):
    return [s.strip() for s in value.split(",") if s.strip()]


@dataclass
class BenchmarkSplit:
    train_normal: list = field(default_factory=list)
    test_familiar: list = field(default_factory=list)
    test_pseudo: list = field(default_factory=list)
    test_anomaly: list = field(default_factory=list)

    def by_role(self, role):
        if role not in ROLES:
            raise KeyError(role)
        return getattr(self, role)

    def all_samples(self):
        return [s for role in ROLES for s in getattr(self, role)]

    def test_samples(self):
        return self.test_familiar + self.test_pseudo + self.test_anomaly

    def counts(self):
        return {role: len(getattr(self, role)) for role in ROLES}


def _cell_role(spec, d, c):
    if c in spec.anomaly_classes:
        return "test_anomaly"
    if (d, c) in set(spec.pseudo_pairs):
        return "test_pseudo"
    return None


def build_benchmark(spec, render=True):
    """Generate every (domain, class) cell and assign roles.

    Cells of true-anomaly classes go to ``test_anomaly``, pseudo pairs to
    ``test_pseudo``; every other cell is shuffled and split
    ``round(train_fraction * per_cell)`` / rest into train / familiar test.
    With ``render=False`` only labels are produced (``image`` is None).
    """
    spec.validate()
    if render and (spec.domains > len(DOMAINS) or spec.classes > len(GLYPHS)):
        raise BenchmarkError(
            f"the renderer supports {len(DOMAINS)} domains x {len(GLYPHS)} classes; "
            f"use render=False for label-only benchmarks")
    rng = np.random.default_rng(spec.seed)
    split = BenchmarkSplit()
    n_train = int(round(spec.train_fraction * spec.per_cell))
    for d in range(spec.domains):
        for c in range(spec.classes):
            aux = rng.integers(0, [N_SIZES, N_JITTER], size=(spec.per_cell, 2))
            seeds = rng.integers(0, 2 ** 31, size=spec.per_cell)
            order = rng.permutation(spec.per_cell)
            fixed = _cell_role(spec, d, c)
            for rank, k in enumerate(order):
                if fixed is not None:
                    role = fixed
                else:
                    role = "train_normal" if rank < n_train else "test_familiar"
                relevant = (c, int(aux[k, 0]), int(aux[k, 1]))
                image = render_sample(relevant, d, int(seeds[k]), spec.image_size) if render else None
                sample = LabeledSample(f"d{d}_c{c}_{k:04d}", d, relevant, role, image)
                split.by_role(role).append(sample)
    for role in ROLES:
        split.by_role(role).sort(key=lambda s: s.id)
    return split


# ------------------------------------------------------------------ manifest IO

def write_manifest(split, directory):
    """Write ``manifest.csv`` plus one 8-bit RGB PNG per sample under ``images/``."""
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    rows = []
    for sample in split.all_samples():
        if sample.image is None:
            raise BenchmarkError(f"sample {sample.id} has no image to write")
        filename = f"images/{sample.id}.png"
        pixels = to_uint8(sample.image)
        Image.fromarray(pixels, mode="RGB").save(os.path.join(directory, filename), optimize=False)
        aux = list(sample.relevant[1:3]) + [0] * (2 - len(sample.relevant[1:3]))
        rows.append([filename, sample.id, sample.nuisance, sample.relevant[0], aux[0], aux[1], sample.role])
    with open(os.path.join(directory, "manifest.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    return os.path.join(directory, "manifest.csv")


def read_manifest(directory, load_images=True):
    path = os.path.join(directory, "manifest.csv")
    split = BenchmarkSplit()
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise BenchmarkError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            role = row["role"].strip()
            if role not in ROLES:
                raise BenchmarkError(f"{path}:{lineno}: unknown role {role!r}")
            sid = row["id"].strip()
            if sid in seen:
                raise BenchmarkError(f"{path}:{lineno}: duplicate id {sid!r}")
            seen.add(sid)
            image = None
            if load_images:
                img_path = os.path.join(directory, row["filename"])
                if not os.path.exists(img_path):
                    raise BenchmarkError(f"{path}:{lineno}: image file {row['filename']!r} for id {sid!r} not found")
                with Image.open(img_path) as im:
                    image = from_uint8(np.asarray(im.convert("RGB")))
            relevant = (int(row["class"]), int(row["aux1"]), int(row["aux2"]))
            split.by_role(role).append(LabeledSample(sid, int(row["nuisance"]), relevant, role, image))
    return split
