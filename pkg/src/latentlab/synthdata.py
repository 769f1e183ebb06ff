"""Procedural three-category product corpus: bags, footwear, eyewear.

Every image is a pure function of its spec's category and four attributes
(hue, scale, thickness, aspect) at the requested dims; shapes are drawn
supersampled and downfiltered, then quantized to the 8-bit grid so that the
PPM round trip is lossless. Silhouettes are designed so a tiny geometric
heuristic (bounding-box aspect plus vertical mass centroid) recovers the
category.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import EmptyCorpusError, ParseError, ValidationError
from . import ppm

CATEGORIES = ("bag", "footwear", "eyewear")

HUE_RANGE = (0.0, 1.0)  # half-open
SCALE_RANGE = (0.5, 1.0)
THICKNESS_RANGE = (0.05, 0.3)
ASPECT_RANGE = (0.5, 2.0)

_SUPERSAMPLE = 4
_SATURATION = 0.72
_VALUE = 0.62


@dataclass(frozen=True)
class ItemSpec:
    """Category plus the rendering attributes; seed is provenance only."""

    category: str
    hue: float
    scale: float
    thickness: float
    aspect: float
    seed: int = 0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValidationError(
                f"unknown category {self.category!r}, expected one of {CATEGORIES}"
            )
        if not (HUE_RANGE[0] <= self.hue < HUE_RANGE[1]):
            raise ValidationError(f"hue {self.hue} outside [0, 1)")
        if not (SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]):
            raise ValidationError(f"scale {self.scale} outside {SCALE_RANGE}")
        if not (THICKNESS_RANGE[0] <= self.thickness <= THICKNESS_RANGE[1]):
            raise ValidationError(
                f"thickness {self.thickness} outside {THICKNESS_RANGE}"
            )
        if not (ASPECT_RANGE[0] <= self.aspect <= ASPECT_RANGE[1]):
            raise ValidationError(f"aspect {self.aspect} outside {ASPECT_RANGE}")


@dataclass
class Corpus:
    """Ordered items: pixel array (n, H, W, 3) in [0, 1] plus tags and specs."""

    images: np.ndarray
    tags: list
    specs: list
    seed: int = 0

    def __len__(self):
        return self.images.shape[0]

    @property
    def dims(self):
        return tuple(self.images.shape[1:])

    def counts(self):
        return {cat: self.tags.count(cat) for cat in CATEGORIES}

    def manifest(self):
        return {"counts": self.counts(), "dims": self.dims, "seed": self.seed}


def _fill_and_stroke(hue):
    fill = tuple(
        int(round(255 * c)) for c in colorsys.hsv_to_rgb(hue, _SATURATION, _VALUE)
    )
    stroke = tuple(
        int(round(255 * c))
        for c in colorsys.hsv_to_rgb(hue, _SATURATION, _VALUE * 0.55)
    )
    return fill, stroke


def _draw_bag(draw, cw, ch, m, spec, fill, stroke):
    s = spec.scale
    f = spec.aspect**0.25
    cx = cw / 2.0
    half_w = 0.26 * s * f * m
    half_h = 0.32 * s / f * m
    handle_h = 0.14 * s * m
    cy = ch / 2.0 + handle_h / 2.0
    stroke_w = max(2, int(round(spec.thickness * 0.50 * s * m)))
    # handle arc sits on top of the body
    hw = 0.62 * half_w
    draw.ellipse(
        [cx - hw, cy - half_h - handle_h, cx + hw, cy - half_h + handle_h],
        outline=stroke,
        width=stroke_w,
    )
    draw.rounded_rectangle(
        [cx - half_w, cy - half_h, cx + half_w, cy + half_h],
        radius=0.25 * min(half_w, half_h),
        fill=fill,
        outline=stroke,
        width=max(1, stroke_w // 2),
    )
    # flap hints at a clasp without changing the outer silhouette
    draw.line(
        [cx - half_w, cy - 0.35 * half_h, cx + half_w, cy - 0.35 * half_h],
        fill=stroke,
        width=max(1, stroke_w // 2),
    )


def _draw_footwear(draw, cw, ch, m, spec, fill, stroke):
    s = spec.scale
    f = spec.aspect**0.25
    cx = cw / 2.0
    half_w = 0.42 * s * f * m
    sole_h = (0.08 + 0.32 * spec.thickness) * s * m
    upper_h = 0.24 * s / f * m
    bottom = ch / 2.0 + (sole_h + upper_h) / 2.0
    left = cx - half_w
    right = cx + half_w
    sole_top = bottom - sole_h
    # upper: tall ankle at the left tapering to the toe at the right
    draw.polygon(
        [
            (left, sole_top),
            (left + 0.02 * half_w, sole_top - upper_h),
            (left + 0.42 * half_w, sole_top - 0.80 * upper_h),
            (cx + 0.20 * half_w, sole_top - 0.38 * upper_h),
            (right - 0.05 * half_w, sole_top - 0.16 * upper_h),
            (right, sole_top),
        ],
        fill=fill,
    )
    draw.rounded_rectangle(
        [left, sole_top, right, bottom],
        radius=0.45 * sole_h,
        fill=stroke,
    )


def _draw_eyewear(draw, cw, ch, m, spec, fill, stroke):
    s = spec.scale
    f = spec.aspect**0.25
    cx = cw / 2.0
    cy = ch / 2.0
    half_w = 0.38 * s * f * m
    r = 0.145 * s / f * m
    d = half_w - r
    stroke_w = max(2, int(round(spec.thickness * 0.40 * s * m)))
    for side in (-1, 1):
        lx = cx + side * d
        draw.ellipse(
            [lx - r, cy - r, lx + r, cy + r],
            fill=fill,
            outline=stroke,
            width=stroke_w,
        )
    # bridge joins the inner lens edges slightly above center
    by = cy - 0.35 * r
    draw.line(
        [cx - d + r * 0.75, by, cx + d - r * 0.75, by],
        fill=stroke,
        width=stroke_w,
    )


_RENDERERS = {
    "bag": _draw_bag,
    "footwear": _draw_footwear,
    "eyewear": _draw_eyewear,
}


def render_item(spec, dims=(32, 32)):
    """Render one item; returns (H, W, 3) float64 in [0, 1] on the 8-bit grid."""
    h, w = int(dims[0]), int(dims[1])
    cw, ch = w * _SUPERSAMPLE, h * _SUPERSAMPLE
    canvas = Image.new("RGB", (cw, ch), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    fill, stroke = _fill_and_stroke(spec.hue)
    _RENDERERS[spec.category](draw, cw, ch, min(cw, ch), spec, fill, stroke)
    small = canvas.resize((w, h), Image.LANCZOS)
    return ppm.to_unit(np.asarray(small, dtype=np.uint8))


def classify_silhouette(image):
    """Geometry-only category guess: box aspect, then vertical mass centroid.

    Bags read as tall boxes; footwear is wide and bottom-heavy; eyewear is
    wide and vertically centered. Intentionally crude; it exists to certify
    that generated (and decently reconstructed) images carry recoverable
    class structure.
    """
    img = np.asarray(image, dtype=float)
    fg = img.min(axis=2) < 0.80
    if not fg.any():
        return "bag"
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    height = rows[-1] - rows[0] + 1
    width = cols[-1] - cols[0] + 1
    if width / height < 1.30:
        return "bag"
    ys = np.nonzero(fg)[0].astype(float)
    centroid = (ys.mean() - rows[0]) / max(height - 1, 1)
    return "footwear" if centroid > 0.55 else "eyewear"


def _normalize_counts(counts):
    if isinstance(counts, dict):
        unknown = set(counts) - set(CATEGORIES)
        if unknown:
            raise ValidationError(f"unknown categories in counts: {sorted(unknown)}")
        triple = tuple(int(counts.get(cat, 0)) for cat in CATEGORIES)
    else:
        triple = tuple(int(c) for c in counts)
        if len(triple) != len(CATEGORIES):
            raise ValidationError(
                f"counts must have {len(CATEGORIES)} entries, got {len(triple)}"
            )
    if any(c < 0 for c in triple):
        raise ValidationError(f"negative count in {triple}")
    return triple


BALANCED_COUNTS = (1000, 1000, 1000)
# paper-like skew, scaled down: bags/footwear/eyewear
IMBALANCED_COUNTS = (940, 890, 340)


def generate_corpus(counts, dims=(32, 32), seed=0):
    """Sample attribute values uniformly (seeded) and render every item.

    Items are ordered by category: all bags, then footwear, then eyewear.
    """
    triple = _normalize_counts(counts)
    if sum(triple) == 0:
        raise EmptyCorpusError("corpus would contain zero items")
    rng = np.random.default_rng(seed)
    images, tags, specs = [], [], []
    index = 0
    for cat, n in zip(CATEGORIES, triple):
        for _ in range(n):
            spec = ItemSpec(
                category=cat,
                hue=rng.uniform(*HUE_RANGE),
                scale=rng.uniform(*SCALE_RANGE),
                thickness=rng.uniform(*THICKNESS_RANGE),
                aspect=rng.uniform(*ASPECT_RANGE),
                seed=index,
            )
            images.append(render_item(spec, dims))
            tags.append(cat)
            specs.append(spec)
            index += 1
    return Corpus(np.stack(images), tags, specs, seed=seed)


def save_corpus(corpus, path):
    """Write manifest.tsv plus images/NNNNNN.ppm under path."""
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    h, w, c = corpus.dims
    lines = [f"#latentlab-corpus\tdims={h}x{w}x{c}\tseed={corpus.seed}"]
    for i, (tag, spec) in enumerate(zip(corpus.tags, corpus.specs)):
        fname = f"images/{i:06d}.ppm"
        ppm.write_ppm(root / fname, ppm.to_bytes8(corpus.images[i]))
        lines.append(
            f"{i}\t{fname}\t{tag}\t{spec.hue!r}\t{spec.scale!r}"
            f"\t{spec.thickness!r}\t{spec.aspect!r}"
        )
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_meta(line):
    meta = {"seed": 0, "dims": None}
    for field in line.split("\t")[1:]:
        key, _, value = field.partition("=")
        if key == "seed":
            meta["seed"] = int(value)
        elif key == "dims":
            meta["dims"] = tuple(int(v) for v in value.split("x"))
    return meta


def load_corpus(path):
    """Load a corpus directory; inverse of save_corpus (bit-identical pixels)."""
    root = Path(path)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise EmptyCorpusError(f"no manifest.tsv in {root}")
    meta = {"seed": 0, "dims": None}
    images, tags, specs = [], [], []
    with open(manifest, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#latentlab-corpus"):
                    meta = _parse_meta(line)
                continue
            fields = line.split("\t")
            if len(fields) != 7:
                raise ParseError(
                    f"{manifest}: line {lineno}: expected 7 fields, got {len(fields)}"
                )
            idx_s, fname, tag, hue_s, scale_s, thick_s, aspect_s = fields
            try:
                idx = int(idx_s)
                attrs = [float(v) for v in (hue_s, scale_s, thick_s, aspect_s)]
            except ValueError as exc:
                raise ParseError(f"{manifest}: line {lineno}: {exc}")
            if tag not in CATEGORIES:
                raise ParseError(
                    f"{manifest}: line {lineno}: unknown category {tag!r}"
                )
            try:
                spec = ItemSpec(tag, *attrs, seed=idx)
            except ValidationError as exc:
                raise ParseError(f"{manifest}: line {lineno}: {exc}")
            img_path = root / fname
            if not img_path.exists():
                raise ParseError(f"item {idx}: missing image file {fname}")
            try:
                pixels = ppm.read_ppm(img_path)
            except ParseError as exc:
                raise ParseError(f"item {idx} ({fname}): {exc}")
            images.append(ppm.to_unit(pixels))
            tags.append(tag)
            specs.append(spec)
    if not images:
        raise EmptyCorpusError(f"manifest {manifest} lists no items")
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise ParseError(f"inconsistent image dims in corpus: {sorted(shapes)}")
    stacked = np.stack(images)
    if meta["dims"] is not None and tuple(stacked.shape[1:]) != tuple(meta["dims"]):
        raise ParseError(
            f"manifest declares dims {meta['dims']}, images are "
            f"{tuple(stacked.shape[1:])}"
        )
    return Corpus(stacked, tags, specs, seed=meta["seed"])
