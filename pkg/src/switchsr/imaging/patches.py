from dataclasses import dataclass

import numpy as np
from PIL import Image

from .resample import resize_array


@dataclass
class ImagePatch:
    """A normalized image tile: ``pixels`` is ``(C, H, W)`` with values in [0, 1]."""

    id: str
    pixels: np.ndarray
    source_offset: tuple = (0, 0)

    @property
    def shape(self):
        return self.pixels.shape


def to_bytes(pixels):
    """Quantize [0, 1] samples to uint8 with round-half-up."""
    return np.clip(np.floor(np.asarray(pixels, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def quantize(pixels):
    return to_bytes(pixels).astype(np.float64) / 255.0


def load_png(path, patch_id=None):
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                if im.mode in ("P", "LA", "RGBA", "I;16", "I"):
                    raise OSError(f"unsupported PNG mode {im.mode}")
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if arr.dtype != np.uint8:
        raise OSError(f"cannot read image {path}: expected 8-bit samples, got {arr.dtype}")
    pixels = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    if patch_id is None:
        patch_id = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return ImagePatch(patch_id, pixels.astype(np.float64) / 255.0)


def save_png(patch, path):
    pixels = patch.pixels if isinstance(patch, ImagePatch) else np.asarray(patch)
    data = to_bytes(pixels)
    if data.shape[0] == 1:
        im = Image.fromarray(data[0], mode="L")
    elif data.shape[0] == 3:
        im = Image.fromarray(np.ascontiguousarray(data.transpose(1, 2, 0)), mode="RGB")
    else:
        raise ValueError(f"cannot encode {data.shape[0]}-channel image as PNG")
    try:
        im.save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def tile(mosaic, patch_h, patch_w):
    """Cut a mosaic into a row-major grid of non-overlapping tiles.

    Partial tiles along the bottom and right edges are dropped.
    """
    _, h, w = mosaic.pixels.shape
    if patch_h < 1 or patch_w < 1 or patch_h > h or patch_w > w:
        raise ValueError(f"patch {patch_h}x{patch_w} does not fit mosaic {h}x{w}")
    base_r, base_c = mosaic.source_offset
    out = []
    for r in range(0, h - patch_h + 1, patch_h):
        for c in range(0, w - patch_w + 1, patch_w):
            out.append(ImagePatch(
                f"{mosaic.id}_r{r:05d}_c{c:05d}",
                mosaic.pixels[:, r : r + patch_h, c : c + patch_w].copy(),
                (base_r + r, base_c + c),
            ))
    return out


def bicubic_resize(patch, out_h, out_w):
    """Bicubic resize of an :class:`ImagePatch` or ``(C, H, W)`` array, clamped to [0, 1]."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"degenerate output size {out_h}x{out_w}")
    if isinstance(patch, ImagePatch):
        return ImagePatch(patch.id, resize_array(patch.pixels, out_h, out_w), patch.source_offset)
    return resize_array(patch, out_h, out_w)
