"""Image, manifest, and field-dump input/output.

Images travel through the pipeline as (H, W, C) float64 arrays in
[0, 1], C of 1 or 3. On disk they are 8-bit PNG (written) or 8-bit
PNG / binary PPM / PGM (read). ``quantize`` reproduces exactly what a
save/load round trip would do to an array, so callers can get on-disk
semantics without touching the filesystem: values map to the nearest
of the 256 levels with ties rounded away from zero.

Dataset manifests are CSV files with a ``path,label`` header; relative
paths resolve against the manifest's own directory.

Gain fields (single-channel float grids) are dumped as plain text:
a "H W" header line then H rows of W full-precision floats. The format
is meant for inspection and exact round-tripping, not compactness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageIOError, ManifestError
from .fields import check_image

__all__ = [
    "DatasetManifest",
    "ManifestEntry",
    "load_image",
    "save_image",
    "quantize",
    "load_manifest",
    "save_float_grid",
    "load_float_grid",
]

# PIL modes we accept directly or after a lossless-enough conversion.
_MODE_CONVERT = {"L": None, "RGB": None, "P": "RGB", "LA": "L", "RGBA": "RGB"}


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    class_count: int
    root: Path

    def __len__(self) -> int:
        return len(self.entries)


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG/PPM/PGM into an (H, W, C) float64 array in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode not in _MODE_CONVERT:
                raise ImageIOError(
                    f"{path}: unsupported image mode {mode!r} (need 8-bit gray or RGB)"
                )
            target = _MODE_CONVERT[mode]
            if target is not None:
                img = img.convert(target)
            arr = np.asarray(img, dtype=np.uint8)
    except FileNotFoundError as exc:
        raise ImageIOError(f"{path}: no such file") from exc
    except UnidentifiedImageError as exc:
        raise ImageIOError(f"{path}: not a recognized image file") from exc
    except OSError as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise ImageIOError(f"{path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Write an image array as an 8-bit PNG (grayscale or RGB)."""
    image = check_image(image)
    levels = _to_uint8(image)
    if levels.shape[2] == 1:
        pil = Image.fromarray(levels[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(levels, mode="RGB")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        pil.save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write image: {exc}") from exc


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap an image to the 8-bit lattice, matching a save/load round trip."""
    image = check_image(image)
    return _to_uint8(image).astype(np.float64) / 255.0


def _to_uint8(image: np.ndarray) -> np.ndarray:
    # Half-away-from-zero rounding; np.round would round ties to even.
    levels = np.floor(image * 255.0 + 0.5)
    return np.clip(levels, 0.0, 255.0).astype(np.uint8)


def load_manifest(path: str | Path, class_count: int | None = None) -> DatasetManifest:
    """Parse a ``path,label`` CSV manifest.

    Labels are non-negative integers; when ``class_count`` is given
    they must also be below it. Errors carry the 1-based line number.
    """
    path = Path(path)
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"{path}: cannot open manifest: {exc}") from exc
    entries: list[ManifestEntry] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["path", "label"]:
            raise ManifestError(
                f"{path}:1: manifest header must be exactly 'path,label', got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ManifestError(
                    f"{path}:{lineno}: expected 2 columns, got {len(row)}"
                )
            rel, label_text = row[0].strip(), row[1].strip()
            if not rel:
                raise ManifestError(f"{path}:{lineno}: empty image path")
            try:
                label = int(label_text)
            except ValueError as exc:
                raise ManifestError(
                    f"{path}:{lineno}: label must be an integer, got {label_text!r}"
                ) from exc
            if label < 0:
                raise ManifestError(f"{path}:{lineno}: label must be >= 0, got {label}")
            if class_count is not None and label >= class_count:
                raise ManifestError(
                    f"{path}:{lineno}: label {label} out of range for "
                    f"{class_count} classes"
                )
            entry_path = Path(rel)
            if not entry_path.is_absolute():
                entry_path = path.parent / entry_path
            entries.append(ManifestEntry(path=entry_path, label=label))
    if class_count is None:
        class_count = max((e.label for e in entries), default=-1) + 1
    return DatasetManifest(
        entries=tuple(entries), class_count=class_count, root=path.parent
    )


def save_float_grid(field: np.ndarray, path: str | Path) -> None:
    """Dump an (H, W) float64 field as text with full precision."""
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"field must be 2-D, got shape {arr.shape}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                fh.write(" ".join(repr(float(x)) for x in row))
                fh.write("\n")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write field: {exc}") from exc


def load_float_grid(path: str | Path) -> np.ndarray:
    """Read a field written by :func:`save_float_grid`, bit-exact."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ImageIOError(f"{path}:1: expected 'H W' header")
            try:
                height, width = int(header[0]), int(header[1])
            except ValueError as exc:
                raise ImageIOError(f"{path}:1: bad dimensions {header!r}") from exc
            if height < 1 or width < 1:
                raise ImageIOError(f"{path}:1: non-positive dimensions {header!r}")
            rows = []
            for lineno in range(2, height + 2):
                parts = fh.readline().split()
                if len(parts) != width:
                    raise ImageIOError(
                        f"{path}:{lineno}: expected {width} values, got {len(parts)}"
                    )
                try:
                    rows.append([float(p) for p in parts])
                except ValueError as exc:
                    raise ImageIOError(f"{path}:{lineno}: bad float") from exc
    except OSError as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise ImageIOError(f"{path}: cannot read field: {exc}") from exc
    return np.array(rows, dtype=np.float64)
