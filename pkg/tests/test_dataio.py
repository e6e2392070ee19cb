import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accor.dataio import (
    DatasetFormatError,
    LayoutDescriptor,
    SplitSpec,
    export_external,
    import_external,
    read_dataset,
    split_train_test,
    write_dataset,
)
from accor.frames import FRAME_SHAPE, Band, Dataset, IQFrame

HEADER_BYTES = struct.calcsize("<8sHdIIIIH")


def random_dataset(n, n_classes=3, seed=0, band=Band.GHZ64):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n,) + FRAME_SHAPE) + 1j * rng.normal(size=(n,) + FRAME_SHAPE)
    labels = rng.integers(0, n_classes, size=n)
    return Dataset(data, labels, [f"obj{c}" for c in range(n_classes)], band=band)


def assert_same(a: Dataset, b: Dataset):
    assert a.class_names == b.class_names
    assert a.band == b.band
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.bands, b.bands)
    np.testing.assert_array_equal(a.data, b.data)


class TestContainer:
    def test_empty_round_trip(self, tmp_path):
        ds = Dataset(np.zeros((0,) + FRAME_SHAPE), [], ["a", "b"])
        write_dataset(ds, tmp_path / "e.acc")
        back = read_dataset(tmp_path / "e.acc")
        assert len(back) == 0 and back.class_names == ["a", "b"]

    def test_single_frame_relative_error(self, tmp_path):
        rng = np.random.default_rng(3)
        x = rng.normal(size=FRAME_SHAPE) + 1j * rng.normal(size=FRAME_SHAPE)
        ds = Dataset.from_frames([IQFrame(x, 1)], ["a", "b"])
        write_dataset(ds, tmp_path / "one.acc")
        back = read_dataset(tmp_path / "one.acc").data[0].astype(np.complex128)
        # f64 -> f32 -> f64 on each component
        assert np.max(np.abs(back.real - x.real) / np.abs(x.real)) <= 1e-6
        assert np.max(np.abs(back.imag - x.imag) / np.abs(x.imag)) <= 1e-6

    def test_bit_layout(self, tmp_path):
        data = np.zeros((1,) + FRAME_SHAPE, dtype=np.complex64)
        data[0, 0, 0] = 1.5 - 2.0j
        data[0, 0, 1] = 3.0 + 0.25j
        data[0, 1, 0] = -7.0 + 0j
        ds = Dataset(data, [1], ["xy", "z"], band=67)
        write_dataset(ds, tmp_path / "b.acc")
        raw = (tmp_path / "b.acc").read_bytes()
        magic, version, band, n_rx, n_tx, n_s, n, c = struct.unpack_from("<8sHdIIIIH", raw)
        assert (magic, version, band, n_rx, n_tx, n_s, n, c) == (b"ACCORIQ1", 1, 67.0, 20, 20, 100, 1, 2)
        off = HEADER_BYTES
        assert raw[off : off + 4] == b"\x02\x00xy"
        off += 4 + 3
        label, tag = struct.unpack_from("<HB", raw, off)
        assert (label, tag) == (1, 67)
        iq = np.frombuffer(raw, "<f4", offset=off + 3)
        # channel-major, interleaved I/Q
        assert list(iq[:4]) == [1.5, -2.0, 3.0, 0.25]
        assert list(iq[200:202]) == [-7.0, 0.0]
        assert len(iq) == 400 * 100 * 2

    def test_bad_magic(self, tmp_path):
        write_dataset(random_dataset(2), tmp_path / "d.acc")
        raw = bytearray((tmp_path / "d.acc").read_bytes())
        raw[0:8] = b"NOTACCOR"
        (tmp_path / "d.acc").write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="magic"):
            read_dataset(tmp_path / "d.acc")

    def test_bad_version(self, tmp_path):
        write_dataset(random_dataset(1), tmp_path / "d.acc")
        raw = bytearray((tmp_path / "d.acc").read_bytes())
        raw[8:10] = struct.pack("<H", 9)
        (tmp_path / "d.acc").write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="version"):
            read_dataset(tmp_path / "d.acc")

    def test_truncated_mid_frame_names_index(self, tmp_path):
        write_dataset(random_dataset(4), tmp_path / "d.acc")
        raw = (tmp_path / "d.acc").read_bytes()
        frame = 3 + 400 * 100 * 8
        (tmp_path / "d.acc").write_bytes(raw[: len(raw) - frame // 2])
        with pytest.raises(DatasetFormatError, match="frame 3"):
            read_dataset(tmp_path / "d.acc")

    def test_truncated_header(self, tmp_path):
        (tmp_path / "d.acc").write_bytes(b"ACCORIQ1\x01")
        with pytest.raises(DatasetFormatError):
            read_dataset(tmp_path / "d.acc")

    def test_wrong_payload_length(self, tmp_path):
        ds = random_dataset(2)
        write_dataset(ds, tmp_path / "d.acc")
        raw = bytearray((tmp_path / "d.acc").read_bytes())
        # header still says 400x100 but each frame now carries 99 samples per channel
        raw[22:26] = struct.pack("<I", 99)
        (tmp_path / "d.acc").write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError):
            read_dataset(tmp_path / "d.acc")

    def test_trailing_bytes(self, tmp_path):
        write_dataset(random_dataset(1), tmp_path / "d.acc")
        with open(tmp_path / "d.acc", "ab") as fh:
            fh.write(b"\x00" * 7)
        with pytest.raises(DatasetFormatError, match="payload length"):
            read_dataset(tmp_path / "d.acc")

    def test_label_out_of_range(self, tmp_path):
        write_dataset(random_dataset(2, n_classes=2), tmp_path / "d.acc")
        raw = bytearray((tmp_path / "d.acc").read_bytes())
        off = HEADER_BYTES + 2 * (2 + 4)
        raw[off : off + 2] = struct.pack("<H", 5)
        (tmp_path / "d.acc").write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="frame 0 has label 5"):
            read_dataset(tmp_path / "d.acc")

    def test_single_class_header_rejected(self, tmp_path):
        write_dataset(random_dataset(1, n_classes=2), tmp_path / "d.acc")
        raw = bytearray((tmp_path / "d.acc").read_bytes())
        raw[HEADER_BYTES - 2 : HEADER_BYTES] = struct.pack("<H", 1)
        (tmp_path / "d.acc").write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="classes"):
            read_dataset(tmp_path / "d.acc")

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_dataset(random_dataset(1), tmp_path / "missing" / "d.acc")

    def test_mixed_bands_preserved(self, tmp_path):
        frames = [IQFrame(np.zeros(FRAME_SHAPE), 0, 64), IQFrame(np.ones(FRAME_SHAPE), 1, 67)]
        ds = Dataset.from_frames(frames, ["a", "b"])
        write_dataset(ds, tmp_path / "d.acc")
        back = read_dataset(tmp_path / "d.acc")
        assert [f.band for f in back] == [Band.GHZ64, Band.GHZ67]


@settings(max_examples=15, deadline=None)
@given(
    n=st.integers(0, 4),
    n_classes=st.integers(2, 5),
    seed=st.integers(0, 2**31),
    band=st.sampled_from([64, 67]),
    names=st.lists(st.text(min_size=0, max_size=12), min_size=5, max_size=5),
)
def test_round_trip_property(tmp_path_factory, n, n_classes, seed, band, names):
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-6, 6)
    data = scale * (rng.normal(size=(n,) + FRAME_SHAPE) + 1j * rng.normal(size=(n,) + FRAME_SHAPE))
    ds = Dataset(data, rng.integers(0, n_classes, size=n), names[:n_classes], band=band)
    path = tmp_path_factory.mktemp("rt") / "d.acc"
    write_dataset(ds, path)
    assert_same(read_dataset(path), ds)


class TestExternal:
    def frame(self, seed=0):
        rng = np.random.default_rng(seed)
        # integer-valued so that the integer layouts are exact too
        return np.round(rng.normal(scale=500, size=FRAME_SHAPE)) + 1j * np.round(
            rng.normal(scale=500, size=FRAME_SHAPE)
        )

    def test_planar_equals_interleaved(self, tmp_path):
        x = self.frame()
        flat = x.reshape(-1)
        inter = np.stack([flat.real, flat.imag], axis=-1).astype("<f4")
        planar = np.concatenate([flat.real, flat.imag]).astype("<f4")
        (tmp_path / "i").mkdir()
        (tmp_path / "p").mkdir()
        (tmp_path / "i" / "cup_0.bin").write_bytes(inter.tobytes())
        (tmp_path / "p" / "cup_0.bin").write_bytes(planar.tobytes())
        a = import_external(tmp_path / "i", LayoutDescriptor(encoding="interleaved", label_map={"cup": 1}))
        b = import_external(tmp_path / "p", LayoutDescriptor(encoding="planar", label_map={"cup": 1}))
        np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(a.data[0], x.astype(np.complex64))
        assert a.labels.tolist() == [1] and a.class_names == ["class_0", "cup"]

    @pytest.mark.parametrize("encoding", ["interleaved", "planar"])
    @pytest.mark.parametrize("dtype", ["float32", "float64", "int16", "int32"])
    @pytest.mark.parametrize("byte_order", ["little", "big"])
    def test_export_import_round_trip(self, tmp_path, encoding, dtype, byte_order):
        frames = [IQFrame(self.frame(s), s % 2) for s in range(3)]
        ds = Dataset.from_frames(frames, ["bottle", "mug"])
        layout = LayoutDescriptor(
            encoding=encoding, dtype=dtype, byte_order=byte_order, label_map={"bottle": 0, "mug": 1}
        )
        written = export_external(ds, tmp_path, layout)
        assert len(written) == 3
        back = import_external(tmp_path, layout)
        # files are visited by class directory, then frame index
        order = np.argsort(ds.labels, kind="stable")
        np.testing.assert_array_equal(back.data, ds.data[order])
        np.testing.assert_array_equal(back.labels, ds.labels[order])
        assert back.class_names == ["bottle", "mug"]

    def test_wrong_channel_count(self, tmp_path):
        (tmp_path / "a_0.bin").write_bytes(np.zeros(399 * 100 * 2, "<f4").tobytes())
        with pytest.raises(DatasetFormatError, match="shape"):
            import_external(tmp_path, LayoutDescriptor(shape=(399, 100)))

    def test_file_size_mismatch(self, tmp_path):
        (tmp_path / "a_0.bin").write_bytes(np.zeros(399 * 100 * 2, "<f4").tobytes())
        with pytest.raises(DatasetFormatError, match="a_0.bin"):
            import_external(tmp_path, LayoutDescriptor())

    def test_unknown_encoding(self):
        with pytest.raises(DatasetFormatError, match="encoding"):
            LayoutDescriptor(encoding="zigzag")

    def test_multiple_frames_per_file_and_prefix_keys(self, tmp_path):
        xs = np.stack([self.frame(1), self.frame(2)])
        flat = xs.reshape(2, -1)
        (tmp_path / "ball_x.bin").write_bytes(np.stack([flat.real, flat.imag], -1).astype("<f4").tobytes())
        (tmp_path / "apple_y.bin").write_bytes(np.stack([flat.real, flat.imag], -1)[:1].astype("<f4").tobytes())
        ds = import_external(tmp_path, LayoutDescriptor())
        assert ds.class_names == ["apple", "ball"]
        assert ds.labels.tolist() == [0, 1, 1]

    def test_unmapped_key(self, tmp_path):
        (tmp_path / "ghost_0.bin").write_bytes(np.zeros(400 * 100 * 2, "<f4").tobytes())
        with pytest.raises(DatasetFormatError, match="ghost"):
            import_external(tmp_path, LayoutDescriptor(label_map={"cup": 0, "mug": 1}))

    def test_descriptor_text_round_trip(self):
        layout = LayoutDescriptor(encoding="planar", dtype="int16", byte_order="big", label_map={"a": 0, "b": 1}, band=67)
        again = LayoutDescriptor.from_text(layout.to_text())
        assert again == layout

    def test_descriptor_without_section_header(self):
        layout = LayoutDescriptor.from_text("shape = 400x100\nencoding = planar\nlabel_map = cup:0, mug:1\n")
        assert layout.encoding == "planar" and layout.label_map == {"cup": 0, "mug": 1}

    def test_descriptor_unknown_key(self):
        with pytest.raises(DatasetFormatError, match="colour"):
            LayoutDescriptor.from_text("colour = red\n")


class TestSplit:
    def test_stratified_counts(self):
        labels = np.repeat(np.arange(10), 200)
        train, test = split_train_test(labels, SplitSpec(0.8))
        assert (len(train), len(test)) == (1600, 400)
        assert np.bincount(labels[train]).tolist() == [160] * 10
        assert np.bincount(labels[test]).tolist() == [40] * 10

    def test_same_seed_same_split(self):
        labels = np.repeat(np.arange(3), 7)
        a = split_train_test(labels, SplitSpec(seed=4))
        b = split_train_test(labels, SplitSpec(seed=4))
        c = split_train_test(labels, SplitSpec(seed=5))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[1], c[1])

    @pytest.mark.parametrize("stratified", [True, False])
    def test_extreme_fraction_keeps_a_test_frame(self, stratified):
        train, test = split_train_test(np.arange(10) % 2, SplitSpec(0.999, stratified=stratified))
        assert len(test) >= 1 and len(train) + len(test) == 10

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_outside_open_interval(self, fraction):
        with pytest.raises(ValueError):
            SplitSpec(fraction)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            split_train_test(np.array([], dtype=int))

    def test_accepts_dataset(self):
        ds = random_dataset(6, n_classes=2, seed=1)
        train, test = split_train_test(ds)
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(6))


@settings(max_examples=60, deadline=None)
@given(
    counts=st.lists(st.integers(1, 40), min_size=1, max_size=8),
    fraction=st.floats(0.05, 0.95),
    seed=st.integers(0, 1000),
    stratified=st.booleans(),
)
def test_split_is_partition(counts, fraction, seed, stratified):
    labels = np.repeat(np.arange(len(counts)), counts)
    np.random.default_rng(seed).shuffle(labels)
    train, test = split_train_test(labels, SplitSpec(fraction, seed, stratified))
    assert len(np.intersect1d(train, test)) == 0
    assert np.array_equal(np.union1d(train, test), np.arange(len(labels)))
    assert len(test) >= 1
    if stratified:
        per_class_test = np.bincount(labels[test], minlength=len(counts))
        exact = np.array(counts) * (1 - fraction)
        assert np.all(np.abs(per_class_test - exact) <= 1.0 + 1e-9)
