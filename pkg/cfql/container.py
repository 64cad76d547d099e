"""Versioned binary container for named float64 tensors"""

import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from .C import *  # noqa: F403
from .format_version import __format_version__

logger = logging.getLogger(__name__)
__all__ = ['write_tensors', 'read_tensors']

_U32 = struct.Struct('<I')


def write_tensors(
        filename: Union[str, Path],
        tensors: Dict[str, np.ndarray]
) -> None:
    """Write named tensors to a binary container

    Layout: magic ``CFQL``, u32 format version, u32 tensor count, then per
    tensor u32 name length, UTF-8 name, u32 rank, u32 extents and the
    row-major little-endian float64 payload.

    Arguments:
        filename: Destination file.
        tensors: Tensors by name, written in iteration order.
    """
    chunks = [CONTAINER_MAGIC, _U32.pack(__format_version__),
              _U32.pack(len(tensors))]
    for name, tensor in tensors.items():
        array = np.ascontiguousarray(tensor, dtype='<f8')
        encoded = name.encode('utf-8')
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(extent) for extent in array.shape)
        chunks.append(array.tobytes())
    Path(filename).write_bytes(b''.join(chunks))
    logger.debug(f"Wrote {len(tensors)} tensors to {filename}.")


def read_tensors(filename: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a container written by :func:`write_tensors`

    Arguments:
        filename: Container file.

    Returns:
        Tensors by name, in file order.

    Raises:
        ValueError: if the file is not a valid container of a supported
            version.
    """
    data = Path(filename).read_bytes()
    if data[:4] != CONTAINER_MAGIC:
        raise ValueError(f"{filename} is not a tensor container "
                         "(bad magic bytes).")
    offset = 4

    def read_u32():
        nonlocal offset
        if offset + 4 > len(data):
            raise ValueError(f"{filename} is truncated.")
        value, = _U32.unpack_from(data, offset)
        offset += 4
        return value

    version = read_u32()
    if version != __format_version__:
        raise ValueError(f"{filename} has format version {version}, "
                         f"supported is {__format_version__}.")
    tensors = {}
    for _ in range(read_u32()):
        name_length = read_u32()
        name = data[offset:offset + name_length].decode('utf-8')
        offset += name_length
        shape = tuple(read_u32() for _ in range(read_u32()))
        n_bytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + n_bytes > len(data):
            raise ValueError(f"{filename} is truncated in tensor '{name}'.")
        tensors[name] = np.frombuffer(
            data, dtype='<f8', count=n_bytes // 8, offset=offset
        ).reshape(shape).astype(float)
        offset += n_bytes
    if offset != len(data):
        raise ValueError(f"{filename} has {len(data) - offset} trailing "
                         "bytes.")
    return tensors
