"""Minimal NPY v1.0 reader/writer and label-map checks.

Only little-endian ``<f4``, ``<f8``, ``|u1`` and ``<i4`` arrays in C order are
accepted. Arrays returned by :func:`read_array` are read-only.
"""
import ast
import os
import struct

import numpy as np

MAGIC = b"\x93NUMPY"
VERSION = b"\x01\x00"
_PREFIX_LEN = len(MAGIC) + len(VERSION) + 2  # + uint16 header length
ALIGN = 64

SUPPORTED = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "|u1": np.dtype("u1"),
    "<u1": np.dtype("u1"),
    "<i4": np.dtype("<i4"),
}
_DESCR = {np.dtype("<f4"): "<f4", np.dtype("<f8"): "<f8", np.dtype("u1"): "|u1", np.dtype("<i4"): "<i4"}

IGNORE_INDEX = 255


class NpyFormatError(ValueError):
    """The file is not a well-formed NPY v1.0 container."""


class NpyUnsupportedError(ValueError):
    """Well-formed NPY, but a dtype, byte order or layout this store refuses."""


def _parse_header(text):
    try:
        header = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"unparseable header: {text!r}") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"header must have exactly descr/fortran_order/shape keys: {text!r}")
    descr, fortran, shape = header["descr"], header["fortran_order"], header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise NpyFormatError(f"bad shape {shape!r}")
    if not isinstance(fortran, bool):
        raise NpyFormatError(f"bad fortran_order {fortran!r}")
    if not isinstance(descr, str):
        raise NpyUnsupportedError(f"structured dtype {descr!r} not supported")
    if fortran:
        raise NpyUnsupportedError("Fortran-order arrays are not supported")
    if descr not in SUPPORTED:
        raise NpyUnsupportedError(f"dtype {descr!r} not supported (want one of {sorted(_DESCR.values())})")
    if len(shape) == 0 or min(shape) < 1:
        raise NpyUnsupportedError(f"shape {shape} must be non-empty with every dimension >= 1")
    return SUPPORTED[descr], shape


def read_array(path):
    """Read an NPY v1.0 file into a read-only C-ordered array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PREFIX_LEN or raw[:6] != MAGIC:
        raise NpyFormatError(f"{path}: missing NPY magic")
    if raw[6:8] != VERSION:
        raise NpyFormatError(f"{path}: only NPY version 1.0 is supported, got {raw[6]}.{raw[7]}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    start = _PREFIX_LEN + hlen
    if len(raw) < start:
        raise NpyFormatError(f"{path}: truncated header")
    try:
        text = raw[_PREFIX_LEN:start].decode("latin1")
    except UnicodeDecodeError as exc:  # pragma: no cover - latin1 decodes anything
        raise NpyFormatError(str(exc)) from exc
    dtype, shape = _parse_header(text)
    count = int(np.prod(shape))
    nbytes = count * dtype.itemsize
    if len(raw) - start != nbytes:
        raise NpyFormatError(
            f"{path}: header promises {count} values ({nbytes} bytes), found {len(raw) - start} bytes"
        )
    return np.frombuffer(raw, dtype=dtype, count=count, offset=start).reshape(shape)


def header_bytes(dtype, shape):
    """Encoded magic + header for ``dtype``/``shape``, padded to ``ALIGN`` bytes."""
    shape = tuple(int(s) for s in shape)
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %r, }" % (_DESCR[np.dtype(dtype)], shape)
    pad = -(_PREFIX_LEN + len(text) + 1) % ALIGN
    text = text + " " * pad + "\n"
    return MAGIC + VERSION + struct.pack("<H", len(text)) + text.encode("latin1")


def write_array(arr, path):
    """Write ``arr`` as NPY v1.0 (little-endian, C order).

    Raises :class:`NpyUnsupportedError` for dtypes outside the supported set
    and lets ``OSError`` propagate on I/O failure.
    """
    payload = encode_array(arr)
    with open(path, "wb") as fh:
        fh.write(payload)


def encode_array(arr):
    """Complete NPY v1.0 file contents for ``arr`` as bytes."""
    arr = np.asarray(arr)
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    if dtype not in _DESCR:
        raise NpyUnsupportedError(f"dtype {arr.dtype} not supported")
    if arr.ndim == 0 or min(arr.shape) < 1:
        raise NpyUnsupportedError(f"shape {arr.shape} must be non-empty with every dimension >= 1")
    data = np.ascontiguousarray(arr, dtype=dtype)
    return header_bytes(dtype, data.shape) + data.tobytes(order="C")


def write_files_atomic(items):
    """Write ``(path, bytes)`` pairs so that either every file lands or none does."""
    staged = []
    try:
        for path, payload in items:
            tmp = f"{path}.partial-{os.getpid()}"
            staged.append((tmp, path))
            with open(tmp, "wb") as fh:
                fh.write(payload)
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise


def validate_labels(labels, num_classes, ignore_index=IGNORE_INDEX):
    """Return ``labels`` as int32, checking each entry is in ``[0, K)`` or ignored."""
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu":
        if labels.dtype.kind == "f" and np.all(np.isfinite(labels)) and np.all(labels == np.round(labels)):
            labels = labels.astype(np.int64)
        else:
            raise ValueError(f"label map must be integer-valued, got dtype {labels.dtype}")
    bad = ((labels < 0) | (labels >= num_classes)) & (labels != ignore_index)
    if bad.any():
        v = labels[bad].flat[0]
        raise ValueError(f"label {v} outside [0, {num_classes}) and not ignore_index={ignore_index}")
    return labels.astype(np.int32, copy=False)
