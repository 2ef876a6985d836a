import gzip
import struct

import numpy as np
import pytest

from soae.data import (
    BadMagicError,
    CountMismatchError,
    Dataset,
    IdxFormatError,
    TruncatedFileError,
    load_mnist,
    load_mnist_idx,
    synthetic_blobs,
    write_idx,
)


def idx_fixture(tmp_path, images=None, labels=None):
    """Two 2x3 images written byte by byte."""
    img = images if images is not None else (
        struct.pack(">4I", 0x803, 2, 2, 3) + bytes([0, 1, 255, 7, 128, 0]) + bytes([255, 255, 0, 0, 1, 2])
    )
    lbl = labels if labels is not None else struct.pack(">2I", 0x801, 2) + bytes([3, 9])
    ip, lp = tmp_path / "img", tmp_path / "lbl"
    ip.write_bytes(img)
    lp.write_bytes(lbl)
    return ip, lp


def test_hand_built_fixture_pixels(tmp_path):
    ds = load_mnist_idx(*idx_fixture(tmp_path))
    assert len(ds) == 2 and ds.input_dim == 6 and ds.image_shape == (2, 3)
    assert ds.X[0, 0] == 0.0 and ds.X[0, 1] == 1 / 255 and ds.X[0, 2] == 255 / 255
    assert ds.X[1, 5] == 2 / 255
    np.testing.assert_array_equal(ds.y, [3, 9])
    ex = ds[1]
    assert ex.y == 9 and ex.x.shape == (6,)


def test_bad_magic(tmp_path):
    paths = idx_fixture(tmp_path, images=struct.pack(">4I", 0x801, 2, 2, 3) + bytes(12))
    with pytest.raises(BadMagicError):
        load_mnist_idx(*paths)


def test_truncated_body(tmp_path):
    paths = idx_fixture(tmp_path, images=struct.pack(">4I", 0x803, 2, 2, 3) + bytes(11))
    with pytest.raises(TruncatedFileError):
        load_mnist_idx(*paths)


def test_truncated_header(tmp_path):
    paths = idx_fixture(tmp_path, labels=struct.pack(">I", 0x801))
    with pytest.raises(TruncatedFileError):
        load_mnist_idx(*paths)


def test_count_mismatch(tmp_path):
    paths = idx_fixture(tmp_path, labels=struct.pack(">2I", 0x801, 3) + bytes([1, 2, 3]))
    with pytest.raises(CountMismatchError):
        load_mnist_idx(*paths)


def test_errors_are_distinct_and_share_a_base():
    kinds = {BadMagicError, TruncatedFileError, CountMismatchError}
    assert len(kinds) == 3 and all(issubclass(k, IdxFormatError) for k in kinds)
    assert not issubclass(BadMagicError, TruncatedFileError)


def test_gzip_is_sniffed(tmp_path):
    ip, lp = idx_fixture(tmp_path)
    gz = tmp_path / "img.gz"
    gz.write_bytes(gzip.compress(ip.read_bytes()))
    np.testing.assert_array_equal(load_mnist_idx(gz, lp).X, load_mnist_idx(ip, lp).X)


def test_write_round_trip_is_bit_identical(tmp_path):
    ip, lp = idx_fixture(tmp_path)
    ds = load_mnist_idx(ip, lp)
    write_idx(ds, tmp_path / "i2", tmp_path / "l2")
    assert (tmp_path / "i2").read_bytes() == ip.read_bytes()
    assert (tmp_path / "l2").read_bytes() == lp.read_bytes()


def test_real_mnist_test_split():
    ds = load_mnist("test")
    assert len(ds) == 10_000 and ds.input_dim == 784
    assert set(np.unique(ds.y)) == set(range(10))
    assert ds.X.min() == 0.0 and ds.X.max() == 1.0
    # exact scaling: every pixel times 255 is an integer byte value
    assert np.array_equal(ds.X[:50] * 255, np.rint(ds.X[:50] * 255))


def test_limit_keeps_file_order():
    full = load_mnist("test", limit=300)
    part = load_mnist("test", limit=100)
    assert len(part) == 100
    np.testing.assert_array_equal(part.X, full.X[:100])
    np.testing.assert_array_equal(part.y, full.y[:100])


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mnist("test", directory=tmp_path)


def test_blobs_examples():
    assert not synthetic_blobs(30, 4, 1, 0.1, seed=0).y.any()
    ds = synthetic_blobs(60, 5, 3, 0.0, seed=1)
    for k in range(3):
        rows = ds.X[ds.y == k]
        assert np.all(rows == rows[0])
    a, b = synthetic_blobs(50, 6, 4, 0.2, seed=9), synthetic_blobs(50, 6, 4, 0.2, seed=9)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert a.X.min() >= 0 and a.X.max() <= 1


@pytest.mark.parametrize("args", [(2, 4, 3, 0.1), (10, 1, 2, 0.1), (10, 4, 0, 0.1), (10, 4, 2, -1.0)])
def test_blobs_invalid_sizes(args):
    with pytest.raises(ValueError):
        synthetic_blobs(*args)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.full((2, 3), 1.5), np.zeros(2), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([0, 5]), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.zeros(3), 2)
