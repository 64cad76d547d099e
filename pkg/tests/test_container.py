"""Tests for cfql.container"""
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest

from cfql.container import read_tensors, write_tensors


def test_write_read():
    rng = np.random.default_rng(0)
    tensors = {
        'critic/W0': rng.standard_normal((3, 4)),
        'critic/b0': rng.standard_normal(4),
        'meta/step': np.array(17.0),
        'empty': np.zeros((0, 2)),
    }
    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'tensors.bin')
        write_tensors(filename, tensors)
        data = filename.read_bytes()
        assert data[:4] == b'CFQL'
        actual = read_tensors(filename)

    assert list(actual) == list(tensors)
    for name, tensor in tensors.items():
        assert actual[name].shape == tensor.shape
        assert np.array_equal(actual[name], tensor)


def test_invalid_containers():
    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'tensors.bin')
        write_tensors(filename, {'x': np.arange(6.0).reshape(2, 3)})
        data = filename.read_bytes()

        bad_magic = Path(tmpdir, 'magic.bin')
        bad_magic.write_bytes(b'XXXX' + data[4:])
        with pytest.raises(ValueError, match='magic'):
            read_tensors(bad_magic)

        truncated = Path(tmpdir, 'truncated.bin')
        truncated.write_bytes(data[:-8])
        with pytest.raises(ValueError, match='truncated'):
            read_tensors(truncated)

        trailing = Path(tmpdir, 'trailing.bin')
        trailing.write_bytes(data + b'\0')
        with pytest.raises(ValueError, match='trailing'):
            read_tensors(trailing)

        future = Path(tmpdir, 'future.bin')
        future.write_bytes(data[:4] + struct.pack('<I', 999) + data[8:])
        with pytest.raises(ValueError, match='format version'):
            read_tensors(future)
