"""
Disparity file formats.

- PGM (P5): 16-bit big-endian samples, ``# scale=S`` comment, value = sample / S,
  sample 0 = invalid pixel. 8-bit P5 files are accepted for hole masks.
- PFM (Pf / PF): float32, little-endian on write, rows stored bottom-up;
  +inf marks invalid disparity.
- PPM (P6): 8-bit RGB, written for normal-map previews.
- CityScapes 16-bit PNG: p > 0 -> (p - 1) / 256, p == 0 -> invalid
  (needs Pillow, ``pip install sadi-depth[cityscapes]``).
- Manifest: one ``disparity_path [mask_path]`` per line, ``#`` comments.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .constants import CITYSCAPES_SCALE, PGM_DEFAULT_SCALE, PGM_MAXVAL
from .errors import DimensionError, DomainError, ImageFormatError
from .types import DisparityImage, HoleMask, NormalMap

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_WHITESPACE = b" \t\r\n"


# ==================== Header parsing ====================

class _HeaderReader:
    """Netpbm/PFM header tokenizer that remembers the byte offset."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.comments: List[str] = []

    def _skip(self):
        while self.pos < len(self.data):
            c = self.data[self.pos:self.pos + 1]
            if c in (b"#",):
                end = self.data.find(b"\n", self.pos)
                end = len(self.data) if end < 0 else end
                self.comments.append(self.data[self.pos + 1:end].decode("latin-1").strip())
                self.pos = end + 1
            elif c and c in _WHITESPACE:
                self.pos += 1
            else:
                return

    def token(self, what: str) -> bytes:
        self._skip()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos:self.pos + 1] not in _WHITESPACE \
                and self.data[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if self.pos == start:
            raise ImageFormatError(f"truncated header: missing {what}", start)
        return self.data[start:self.pos]

    def integer(self, what: str) -> int:
        self._skip()
        start = self.pos
        tok = self.token(what)
        try:
            value = int(tok)
        except ValueError:
            raise ImageFormatError(f"bad {what}: {tok!r}", start) from None
        if value <= 0:
            raise ImageFormatError(f"{what} must be positive, got {value}", start)
        return value

    def end_of_header(self) -> int:
        """Consume the single whitespace byte that ends the header."""
        if self.pos >= len(self.data) or self.data[self.pos:self.pos + 1] not in _WHITESPACE:
            raise ImageFormatError("header not terminated by whitespace", self.pos)
        self.pos += 1
        return self.pos


def _read_bytes(path: PathLike) -> bytes:
    return Path(path).read_bytes()


def _payload(data: bytes, offset: int, nbytes: int) -> bytes:
    if len(data) - offset < nbytes:
        raise ImageFormatError(
            f"truncated pixel data: need {nbytes} bytes, have {len(data) - offset}", len(data)
        )
    return data[offset:offset + nbytes]


# ==================== PGM ====================

def _read_pgm(data: bytes) -> Tuple[np.ndarray, int, List[str]]:
    if data[:2] != b"P5":
        raise ImageFormatError(f"not a binary PGM (magic {data[:2]!r})", 0)
    hdr = _HeaderReader(data)
    hdr.pos = 2
    width = hdr.integer("width")
    height = hdr.integer("height")
    maxval = hdr.integer("maxval")
    if maxval > PGM_MAXVAL:
        raise ImageFormatError(f"maxval {maxval} exceeds {PGM_MAXVAL}", hdr.pos)
    offset = hdr.end_of_header()
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raw = _payload(data, offset, width * height * dtype.itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(height, width).astype(np.uint16), maxval, hdr.comments


def _scale_from(comments: List[str], default: float) -> float:
    for c in comments:
        if c.replace(" ", "").startswith("scale="):
            try:
                return float(c.split("=", 1)[1])
            except ValueError:
                raise ImageFormatError(f"bad scale comment {c!r}", 0) from None
    return default


def read_pgm16(path: PathLike) -> DisparityImage:
    """Read a 16-bit PGM disparity map; sample 0 is an invalid pixel."""
    samples, _, comments = _read_pgm(_read_bytes(path))
    scale = _scale_from(comments, PGM_DEFAULT_SCALE)
    valid = samples > 0
    return DisparityImage(np.where(valid, samples / scale, 0.0), valid)


def write_pgm16(path: PathLike, image: DisparityImage, scale: float = PGM_DEFAULT_SCALE) -> Path:
    """Write ``round(d * scale)`` as 16-bit samples; invalid pixels become 0.

    Sample 0 is reserved for invalid pixels, so valid disparities that round
    to 0 are stored as 1 (one quantisation step) and stay valid on read.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    d = image.filled(0.0)
    q = np.clip(np.round(d * scale), 0, PGM_MAXVAL)
    raised = image.valid & (q == 0)
    if raised.any():
        logger.warning(f"{path}: {int(raised.sum())} valid pixel(s) below half a step stored as 1/{scale:g}")
        q = np.where(raised, 1, q)
    q = np.where(image.valid, q, 0).astype(">u2")
    clipped = int(np.count_nonzero(image.valid & (d * scale > PGM_MAXVAL)))
    if clipped:
        logger.warning(f"{path}: {clipped} pixel(s) clipped to maxval {PGM_MAXVAL}")
    header = f"P5\n# scale={float(scale)!r}\n{image.width} {image.height}\n{PGM_MAXVAL}\n".encode("ascii")
    path = Path(path)
    path.write_bytes(header + q.tobytes())
    return path


def read_mask(path: PathLike) -> HoleMask:
    """Hole mask from PGM (nonzero = hole) or PFM (> 0.5 = hole)."""
    if Path(path).suffix.lower() == ".pfm":
        values, _ = read_pfm(path)
        return HoleMask(values > 0.5)
    samples, _, _ = _read_pgm(_read_bytes(path))
    return HoleMask(samples > 0)


def write_mask(path: PathLike, mask: HoleMask) -> Path:
    """8-bit PGM, 255 inside the hole."""
    h, w = mask.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + (mask.values * 255).astype(np.uint8).tobytes())
    return path


# ==================== PFM ====================

def read_pfm(path: PathLike) -> Tuple[np.ndarray, float]:
    """Read a PFM file.

    Returns
    -------
    (np.ndarray, float)
        float32 image, (H, W) for ``Pf`` or (H, W, 3) for ``PF``, top row
        first, and the absolute header scale.
    """
    data = _read_bytes(path)
    magic = data[:2]
    if magic not in (b"Pf", b"PF"):
        raise ImageFormatError(f"not a PFM file (magic {magic!r})", 0)
    channels = 1 if magic == b"Pf" else 3
    hdr = _HeaderReader(data)
    hdr.pos = 2
    width = hdr.integer("width")
    height = hdr.integer("height")
    start = hdr.pos
    tok = hdr.token("scale")
    try:
        scale = float(tok)
    except ValueError:
        raise ImageFormatError(f"bad scale: {tok!r}", start) from None
    if scale == 0:
        raise ImageFormatError("scale must be nonzero", start)
    offset = hdr.end_of_header()
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    raw = _payload(data, offset, width * height * channels * 4)
    img = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return np.flipud(img.reshape(shape)).copy(), abs(scale)


def write_pfm(path: PathLike, image: np.ndarray) -> Path:
    """Write an (H, W) or (H, W, 3) array as little-endian float32 PFM."""
    image = np.asarray(image)
    if image.ndim == 2:
        magic = "Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = "PF"
    else:
        raise DimensionError(f"PFM holds (H,W) or (H,W,3) images, got {image.shape}")
    h, w = image.shape[:2]
    header = f"{magic}\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(np.flipud(image)).astype("<f4").tobytes()
    path = Path(path)
    path.write_bytes(header + body)
    return path


def read_pfm_disparity(path: PathLike) -> DisparityImage:
    values, _ = read_pfm(path)
    if values.ndim != 2:
        raise ImageFormatError("expected a single-channel (Pf) disparity file", 0)
    values = values.astype(np.float64)
    valid = np.isfinite(values)
    return DisparityImage(np.where(valid, values, 0.0), valid)


def write_pfm_disparity(path: PathLike, image: DisparityImage) -> Path:
    return write_pfm(path, np.where(image.valid, image.values, np.inf))


def write_normals_pfm(path: PathLike, normals: NormalMap) -> Path:
    return write_pfm(path, normals.vectors)


def read_normals_pfm(path: PathLike) -> NormalMap:
    values, _ = read_pfm(path)
    if values.ndim != 3:
        raise ImageFormatError("expected a three-channel (PF) normal map", 0)
    return NormalMap(values.astype(np.float64))


# ==================== PPM ====================

def write_ppm(path: PathLike, rgb: np.ndarray) -> Path:
    """Binary P6 with maxval 255."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"PPM needs (H,W,3), got {rgb.shape}")
    h, w = rgb.shape[:2]
    path = Path(path)
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.astype(np.uint8).tobytes())
    return path


# ==================== CityScapes ====================

def decode_cityscapes_disparity(raw16: np.ndarray) -> DisparityImage:
    """p > 0 -> (p - 1) / 256; p == 0 -> invalid."""
    raw = np.asarray(raw16).astype(np.float64)
    if raw.ndim != 2:
        raise DimensionError(f"raw disparity must be 2-D, got {raw.shape}")
    valid = raw > 0
    return DisparityImage(np.where(valid, (raw - 1.0) / CITYSCAPES_SCALE, 0.0), valid)


def read_cityscapes_png(path: PathLike) -> DisparityImage:
    try:
        from PIL import Image
    except ImportError:
        raise ImportError(
            "Reading CityScapes PNGs requires Pillow: pip install sadi-depth[cityscapes]"
        ) from None
    with Image.open(path) as img:
        raw = np.array(img, dtype=np.int64)
    return decode_cityscapes_disparity(raw)


# ==================== Dispatch ====================

def read_disparity(path: PathLike) -> DisparityImage:
    """Read a disparity map by file extension (.pgm, .pfm, .png).

    Raises DomainError when a valid pixel is negative or non-finite.
    """
    suffix = Path(path).suffix.lower()
    if not Path(path).exists():
        raise FileNotFoundError(f"No such file: {path}")
    if suffix == ".pgm":
        image = read_pgm16(path)
    elif suffix == ".pfm":
        image = read_pfm_disparity(path)
    elif suffix == ".png":
        image = read_cityscapes_png(path)
    else:
        raise ValueError(f"Unsupported disparity format: {suffix or path}")
    try:
        return image.check()
    except DomainError as exc:
        raise DomainError(f"{path}: {exc}") from None


def write_disparity(path: PathLike, image: DisparityImage, scale: float = PGM_DEFAULT_SCALE) -> Path:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return write_pgm16(path, image, scale)
    if suffix == ".pfm":
        return write_pfm_disparity(path, image)
    raise ValueError(f"Unsupported output format: {suffix or path}")


# ==================== Manifest ====================

def read_manifest(path: PathLike) -> List[Tuple[Path, Optional[Path]]]:
    """Entries of a manifest; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) > 2:
            raise ValueError(f"{path}:{lineno}: expected 'disparity [mask]', got {raw.strip()!r}")
        disp = base / parts[0]
        mask = base / parts[1] if len(parts) == 2 else None
        entries.append((disp, mask))
    return entries


def write_manifest(path: PathLike, entries: List[Tuple[PathLike, Optional[PathLike]]],
                   header: Optional[Dict[str, object]] = None) -> Path:
    """Write entries relative to the manifest's directory when possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: PathLike) -> str:
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    for disp, mask in entries:
        lines.append(rel(disp) if mask is None else f"{rel(disp)} {rel(mask)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
