"""Image file handling and reconstruction quality metrics.

Images move through the toolkit as float64 arrays in [0, 1].  Grayscale
PGM (binary P5) is parsed natively; PNG goes through Pillow, with color
inputs reduced to luma.  Quality reports carry a schema tag and a hash
of the run configuration so results stay traceable.
"""

import hashlib
import json
import math
import os

import numpy as np
from scipy import ndimage

from . import __version__
from ._util import atomic_write_bytes, atomic_write_text, round_half_away
from .errors import FormatError

REPORT_SCHEMA = "cascs-report/1"

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def luminance(rgb):
    """Weighted luma of an (..., 3) or (..., 4) array; alpha is ignored."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim < 2 or rgb.shape[-1] not in (3, 4):
        raise ValueError("expected trailing RGB(A) channel axis, got shape %r"
                         % (rgb.shape,))
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def _parse_pgm(blob):
    # Header tokens may be separated by any whitespace and interleaved
    # with '#' comment lines; exactly one whitespace byte precedes the
    # raster.
    pos = 0

    def token():
        nonlocal pos
        while pos < len(blob):
            c = blob[pos:pos + 1]
            if c == b"#":
                end = blob.find(b"\n", pos)
                pos = len(blob) if end < 0 else end + 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace() \
                and blob[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        return blob[start:pos]

    if token() != b"P5":
        raise FormatError("not a binary PGM file (magic must be P5)")
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError as exc:
        raise FormatError("bad PGM header field: %s" % exc) from None
    if width <= 0 or height <= 0:
        raise FormatError("bad PGM dimensions %dx%d" % (width, height))
    if not 0 < maxval < 65536:
        raise FormatError("bad PGM maxval %d" % maxval)
    pos += 1
    # Samples wider than one byte are big-endian per the format.
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raster = blob[pos:pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise FormatError("PGM raster truncated")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return arr.astype(np.float64) / maxval


def load_pgm(path):
    with open(path, "rb") as fh:
        return _parse_pgm(fh.read())


def save_pgm(image, path):
    atomic_write_bytes(path, pgm_bytes(image))


def pgm_bytes(image):
    data = quantize_u8(image)
    header = b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0])
    return header + data.tobytes()


def quantize_u8(image):
    """Clip to [0, 1] and round half away from zero onto 0..255."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("expected a 2-D image, got shape %r" % (image.shape,))
    scaled = round_half_away(np.clip(image, 0.0, 1.0) * 255.0)
    return scaled.astype(np.uint8)


def _load_png(path):
    from PIL import Image

    with Image.open(path) as img:
        mode = img.mode
        if mode == "L":
            return np.asarray(img, dtype=np.float64) / 255.0
        if mode in ("I", "I;16"):
            return np.asarray(img, dtype=np.float64) / 65535.0
        if mode not in ("RGB", "RGBA"):
            img = img.convert("RGB")
        return luminance(np.asarray(img, dtype=np.float64) / 255.0)


def load_image(path):
    """Read a PGM or PNG file as a float64 grayscale image in [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic[:2] == b"P5":
        return load_pgm(path)
    if magic == _PNG_MAGIC:
        return _load_png(path)
    raise FormatError("unsupported image file %r (need binary PGM or PNG)" % path)


def save_image(image, path):
    """Write an 8-bit grayscale file; the extension picks PGM or PNG."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        from PIL import Image

        img = Image.fromarray(quantize_u8(image), mode="L")
        tmp = path + ".part"
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    else:
        save_pgm(image, path)


def mse(reference, candidate):
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if reference.shape != candidate.shape:
        raise ValueError("shape mismatch %r vs %r"
                         % (reference.shape, candidate.shape))
    diff = reference - candidate
    return float(np.mean(diff * diff))


def psnr(reference, candidate, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    err = mse(reference, candidate)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_kernel(radius, sigma):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def ssim(reference, candidate, peak=1.0, window=11, sigma=1.5):
    """Mean structural similarity over the valid (fully windowed) region.

    Gaussian weighting, stabilizers (0.01*peak)^2 and (0.03*peak)^2.
    Border pixels whose window leaves the image are excluded rather
    than padded, so the score only reflects real content.
    """
    x = np.asarray(reference, dtype=np.float64)
    y = np.asarray(candidate, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("shape mismatch %r vs %r" % (x.shape, y.shape))
    if x.ndim != 2:
        raise ValueError("expected 2-D images, got shape %r" % (x.shape,))
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be odd and >= 3, got %d" % window)
    radius = window // 2
    if min(x.shape) < window:
        raise ValueError("image %r smaller than the %dx%d window"
                         % (x.shape, window, window))

    kernel = _gaussian_kernel(radius, sigma)

    def smooth(a):
        out = ndimage.correlate1d(a, kernel, axis=0, mode="constant")
        out = ndimage.correlate1d(out, kernel, axis=1, mode="constant")
        return out[radius:-radius, radius:-radius]

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def config_digest(config):
    """Stable short hash of a JSON-serializable configuration mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"),
                       allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def quality_record(name, reference, candidate):
    return {
        "name": str(name),
        "psnr": psnr(reference, candidate),
        "ssim": ssim(reference, candidate),
    }


def _aggregate(records):
    if not records:
        return {}
    out = {}
    for key in ("psnr", "ssim"):
        values = [r[key] for r in records if key in r]
        if values:
            out["mean_%s" % key] = float(np.mean(values))
    return out


def emit_report(records, config=None, seed=None, fmt="json"):
    """Render quality records as a report string.

    JSON reports embed the schema tag, the tool version, a digest of
    the configuration, and per-metric means.  PSNR of identical images
    is +Infinity; json.loads reads that token back as float('inf').
    """
    records = [dict(r) for r in records]
    if fmt == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "tool": "cascs %s" % __version__,
            "seed": seed,
            "config_digest": config_digest(config) if config is not None else None,
            "records": records,
            "aggregate": _aggregate(records),
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        keys = ["name", "psnr", "ssim"]
        lines = [",".join(keys)]
        for rec in records:
            lines.append("%s,%r,%r" % (rec["name"], rec["psnr"], rec["ssim"]))
        agg = _aggregate(records)
        if agg:
            lines.append("mean,%r,%r" % (agg["mean_psnr"], agg["mean_ssim"]))
        return "\n".join(lines) + "\n"
    raise ValueError("unknown report format %r" % (fmt,))


def write_report(records, path, config=None, seed=None):
    fmt = "csv" if path.lower().endswith(".csv") else "json"
    atomic_write_text(path, emit_report(records, config=config, seed=seed, fmt=fmt))
