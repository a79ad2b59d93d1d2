"""Corpus preparation: tiling, bicubic degradation, splitting and manifests.

On disk a corpus is::

    <root>/hr/<id>.png
    <root>/lr/<id>.png
    <root>/manifest.csv     patch_id,hr_path,lr_path,split,label
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import ImagePatch, bicubic_resize, load_png, luma, quantize, save_png, tile

MANIFEST_COLUMNS = ["patch_id", "hr_path", "lr_path", "split", "label"]
SPLITS = ("train", "val")


class ManifestError(ValueError):
    pass


@dataclass
class PatchRecord:
    id: str
    hr: np.ndarray
    lr: np.ndarray
    split: str = "train"
    label: str = ""
    metrics: dict = field(default_factory=dict)


@dataclass
class ManifestRow:
    patch_id: str
    hr_path: str
    lr_path: str
    split: str
    label: str = ""


@dataclass
class CorpusManifest:
    root: Path
    rows: list

    def subset(self, split):
        return [r for r in self.rows if r.split == split]

    def write(self, path=None):
        path = Path(path) if path else self.root / "manifest.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MANIFEST_COLUMNS)
            for r in sorted(self.rows, key=lambda r: r.patch_id):
                w.writerow([r.patch_id, r.hr_path, r.lr_path, r.split, r.label])
        return path


def _degrade(hr_pixels, scale):
    _, h, w = hr_pixels.shape
    if h % scale or w % scale:
        raise ValueError(f"HR patch {h}x{w} is not divisible by scale {scale}")
    return quantize(bicubic_resize(hr_pixels, h // scale, w // scale))


def _write_corpus(patches, scale, split_ratio, rng, out_dir):
    out_dir = Path(out_dir)
    (out_dir / "hr").mkdir(parents=True, exist_ok=True)
    (out_dir / "lr").mkdir(parents=True, exist_ok=True)
    n = len(patches)
    n_train = int(round(split_ratio * n))
    train_idx = set(rng.permutation(n)[:n_train].tolist())
    rows = []
    for i, p in enumerate(patches):
        hr = quantize(luma(p.pixels)[None])
        lr = _degrade(hr, scale)
        hr_rel, lr_rel = f"hr/{p.id}.png", f"lr/{p.id}.png"
        save_png(hr, out_dir / hr_rel)
        save_png(lr, out_dir / lr_rel)
        rows.append(ManifestRow(p.id, hr_rel, lr_rel, "train" if i in train_idx else "val"))
    rows.sort(key=lambda r: r.patch_id)
    manifest = CorpusManifest(out_dir, rows)
    manifest.write()
    return manifest


def prepare(mosaics, patch_h, patch_w, scale, sample_n, split_ratio, seed, out_dir):
    """Tile mosaics, sample ``sample_n`` tiles, degrade by ``scale`` and split.

    ``mosaics`` are :class:`ImagePatch` objects or PNG paths. RGB input is
    reduced to BT.601 luma.
    """
    if scale not in (2, 4):
        raise ValueError(f"scale must be 2 or 4, got {scale}")
    if not 0.0 < split_ratio <= 1.0:
        raise ValueError(f"split_ratio must lie in (0, 1], got {split_ratio}")
    tiles = []
    for i, m in enumerate(mosaics):
        if not isinstance(m, ImagePatch):
            m = load_png(m, patch_id=f"m{i:03d}")
        tiles.extend(tile(m, patch_h, patch_w))
    if sample_n > len(tiles):
        raise ValueError(f"requested {sample_n} patches but only {len(tiles)} tiles are available")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(tiles), sample_n, replace=False))
    return _write_corpus([tiles[i] for i in chosen], scale, split_ratio, rng, out_dir)


def smooth_patch(rng, h, w):
    """Low-frequency gradient plus at most one slow oscillation per axis."""
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w]).reshape(2, 1, 1)
    base = rng.uniform(0.25, 0.75)
    slope = rng.uniform(-0.25, 0.25, size=2)
    amp = rng.uniform(0.0, 0.12)
    freq = rng.uniform(0.2, 1.0, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    img = base + slope[0] * (yy - 0.5) + slope[1] * (xx - 0.5)
    img += amp * np.sin(2 * np.pi * (freq[0] * yy + freq[1] * xx) + phase)
    return np.clip(img, 0.0, 1.0)


def structured_patch(rng, h, w, shade=0.2):
    """Dense mosaic of small shaded rectangles and thin lines on a tilted background.

    Shading gives every rectangle a gentle internal gradient, so the patch
    spans many gray levels the way lit rooftops do.
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tilt = rng.uniform(-shade, shade, size=2)
    img = rng.uniform(0.2, 0.8) + tilt[0] * (yy / h - 0.5) + tilt[1] * (xx / w - 0.5)
    area = h * w
    for _ in range(int(area / 40)):
        rh, rw = rng.integers(2, 9, size=2)
        r, c = rng.integers(0, h - 1), rng.integers(0, w - 1)
        gy, gx = rng.uniform(-shade, shade, size=2)
        box = np.s_[r : r + rh, c : c + rw]
        img[box] = rng.uniform(0.0, 1.0) + gy * (yy[box] - r) / 8 + gx * (xx[box] - c) / 8
    for _ in range(int(np.sqrt(area) / 8)):
        val = rng.uniform(0.0, 1.0)
        if rng.random() < 0.5:
            r = rng.integers(0, h)
            img[r : r + rng.integers(1, 3), :] = val
        else:
            c = rng.integers(0, w)
            img[:, c : c + rng.integers(1, 3)] = val
    return np.clip(img, 0.0, 1.0)


def synth_corpus(n, patch_h, patch_w, seed, out_dir, scale=4, split_ratio=0.8):
    """Equal numbers of smooth and structured patches, degraded like real data.

    Ids are ``smooth_<i>`` or ``struct_<i>`` so the population is recoverable.
    """
    if n < 2:
        raise ValueError(f"synthetic corpus needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    patches = []
    for i in range(n):
        if i < n // 2:
            pix, kind = smooth_patch(rng, patch_h, patch_w), "smooth"
        else:
            pix, kind = structured_patch(rng, patch_h, patch_w), "struct"
        patches.append(ImagePatch(f"{kind}_{i:05d}", pix[None]))
    return _write_corpus(patches, scale, split_ratio, rng, out_dir)


def population(patch_id):
    return patch_id.split("_", 1)[0]


def load_manifest(path):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:4] != MANIFEST_COLUMNS[:4]:
                raise ManifestError(f"{path}: bad header {header}, expected {MANIFEST_COLUMNS}")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) not in (4, 5):
                    raise ManifestError(f"{path}:{lineno}: expected 4 or 5 fields, got {len(rec)}")
                rows.append(ManifestRow(*rec) if len(rec) == 5 else ManifestRow(*rec, ""))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return CorpusManifest(path.parent, rows)


def validate_manifest(manifest, scale=None, split_ratio=None):
    """Return a list of human-readable problems; empty means valid.

    Row numbers count data rows from 1.
    """
    problems = []
    seen = {}
    for rownum, r in enumerate(manifest.rows, start=1):
        if r.patch_id in seen:
            problems.append(f"duplicate patch_id {r.patch_id!r} in rows {seen[r.patch_id]} and {rownum}")
        else:
            seen[r.patch_id] = rownum
        if r.split not in SPLITS:
            problems.append(f"row {rownum}: split {r.split!r} is not one of {SPLITS}")
        dims = {}
        for kind, rel in (("hr", r.hr_path), ("lr", r.lr_path)):
            p = manifest.root / rel
            if not p.exists():
                problems.append(f"row {rownum}: {kind} file {p} does not exist")
                continue
            try:
                dims[kind] = load_png(p).pixels.shape[1:]
            except OSError as exc:
                problems.append(f"row {rownum}: {exc}")
        if len(dims) == 2:
            (hh, hw), (lh, lw) = dims["hr"], dims["lr"]
            s = scale
            if s is None:
                s = hh // lh if lh else 0
            if (hh, hw) != (s * lh, s * lw):
                problems.append(
                    f"row {rownum}: HR {hh}x{hw} is not {s} x LR {lh}x{lw}")
    if split_ratio is not None and manifest.rows:
        n = len(manifest.rows)
        n_train = len(manifest.subset("train"))
        if abs(n_train - split_ratio * n) > 1:
            problems.append(f"{n_train}/{n} train rows does not match split ratio {split_ratio}")
    return problems


def load_patches(manifest, split=None):
    """Read the luma HR/LR pairs of a manifest as :class:`PatchRecord` objects."""
    out = []
    for r in manifest.rows:
        if split is not None and r.split != split:
            continue
        hr = luma(load_png(manifest.root / r.hr_path))[None]
        lr = luma(load_png(manifest.root / r.lr_path))[None]
        out.append(PatchRecord(r.patch_id, hr, lr, r.split, r.label))
    return out
