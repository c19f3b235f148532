"""Binary container for parameter tensors and golden arrays.

File layout: magic ``SGKP``, little-endian u32 version (=1), u64 header
length, a UTF-8 JSON header ``{"spec": ..., "tensors": [{name, shape,
dtype, offset, nbytes}, ...]}``, zero padding to a 64-byte boundary, then
the raw little-endian arrays. Tensor offsets are relative to the start of
the data section and each array starts 64-byte aligned.

Float arrays are stored as float64 regardless of compute dtype so a saved
model reloads bit-exactly.
"""

import json
import struct

import numpy as np

from .errors import CorruptError, FormatError

MAGIC = b"SGKP"
VERSION = 1
ALIGN = 64

_DTYPES = {
    "float64": "<f8",
    "int64": "<i8",
}


def _align(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def _storage_dtype(arr: np.ndarray) -> str:
    if np.issubdtype(arr.dtype, np.floating):
        return "float64"
    if np.issubdtype(arr.dtype, np.integer):
        return "int64"
    raise FormatError(f"unsupported array dtype {arr.dtype}")


def write_container(path, spec, arrays):
    """Write ``arrays`` (ordered name -> ndarray) with a JSON ``spec``."""
    table = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        sdtype = _storage_dtype(arr)
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[sdtype]).tobytes()
        table.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": sdtype,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append((offset, blob))
        offset = _align(offset + len(blob))
    header = json.dumps(
        {"spec": spec, "tensors": table}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        data_start = _align(fh.tell())
        fh.write(b"\x00" * (data_start - fh.tell()))
        for off, blob in blobs:
            pos = fh.tell()
            fh.write(b"\x00" * (data_start + off - pos))
            fh.write(blob)


def read_container(path):
    """Read back (spec, arrays). Raises FormatError on bad magic/version,
    CorruptError on truncation or table inconsistencies."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError("file too short for header")
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    if 16 + header_len > len(blob):
        raise CorruptError("truncated header")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptError(f"unreadable header: {exc}") from exc
    if "tensors" not in header:
        raise CorruptError("header missing tensor table")
    data_start = _align(16 + header_len)
    arrays = {}
    for entry in header["tensors"]:
        dtype = entry["dtype"]
        if dtype not in _DTYPES:
            raise CorruptError(f"unknown dtype {dtype!r}")
        shape = tuple(entry["shape"])
        nbytes = int(entry["nbytes"])
        expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(_DTYPES[dtype]).itemsize
        if expected != nbytes:
            raise CorruptError(
                f"tensor {entry['name']!r}: {nbytes} bytes for shape {shape}"
            )
        start = data_start + int(entry["offset"])
        end = start + nbytes
        if end > len(blob):
            raise CorruptError(f"tensor {entry['name']!r} extends past end of file")
        arr = np.frombuffer(blob[start:end], dtype=_DTYPES[dtype]).reshape(shape)
        arrays[entry["name"]] = arr.copy()
    return header.get("spec"), arrays


def save_tensor(path, arr):
    """Tensor-only container holding a single unnamed array."""
    write_container(path, {"kind": "tensor-only"}, {"tensor": np.asarray(arr)})


def load_tensor(path) -> np.ndarray:
    spec, arrays = read_container(path)
    if not isinstance(spec, dict) or spec.get("kind") != "tensor-only":
        raise FormatError("not a tensor-only container")
    return arrays["tensor"]
