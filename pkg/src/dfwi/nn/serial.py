"""Checkpoint file format.

Layout: magic "DFWI", u32 version, u32 header length, UTF-8 JSON header, then
the named float32 segments in sorted-name order.  The header carries the
architecture descriptor, the noise-schedule parameters, the corpus
normalization bounds (with a checksum so downstream consumers can verify they
use the same bounds) and the segment table.  Round trips are bit-exact.
"""

import hashlib
import json
import struct

import numpy as np

from dfwi.nn import autodiff as ad
from dfwi.nn.denoiser import ArchSpec, DenoiserParams

MAGIC = b"DFWI"
VERSION = 1


def bounds_checksum(bounds):
    """Stable checksum of a normalization-bounds mapping."""
    payload = json.dumps({k: float(v) for k, v in sorted(bounds.items())},
                         sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def save_checkpoint(path, dp, schedule=None, bounds=None, extra=None):
    """Write params + metadata; `schedule` is {"T", "beta_start", "beta_end"}."""
    named = dp.named_arrays()
    segments = []
    offset = 0
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype="<f4")
        segments.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    header = {
        "arch": dp.arch.to_dict(),
        "schedule": schedule,
        "bounds": bounds,
        "bounds_checksum": bounds_checksum(bounds) if bounds else None,
        "segments": segments,
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for name in sorted(named):
            f.write(np.ascontiguousarray(named[name], dtype="<f4").tobytes())
    return path


def load_checkpoint(path):
    """Returns (DenoiserParams, header dict)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode())
        arch = ArchSpec.from_dict(header["arch"])
        params = {}
        for seg in header["segments"]:
            shape = tuple(seg["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = np.frombuffer(f.read(count * 4), dtype="<f4").reshape(shape)
            params[seg["name"]] = ad.parameter(raw.astype(np.float32))
    return DenoiserParams(arch, params), header
