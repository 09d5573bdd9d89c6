import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringct import io


def test_header_and_payload_sizes(tmp_path):
    p = tmp_path / "a.srf"
    io.write_raster(np.zeros((1, 1)), p)
    blob = p.read_bytes()
    assert blob == b"SRF1 f32 2 1 1\n" + b"\x00" * 4
    io.write_raster(np.arange(6.0).reshape(2, 3), p)
    blob = p.read_bytes()
    assert blob.startswith(b"SRF1 f32 2 2 3\n")
    assert len(blob) == len(b"SRF1 f32 2 2 3\n") + 24


def test_payload_is_little_endian_row_major(tmp_path):
    p = tmp_path / "a.srf"
    io.write_raster([[1.0, 2.0], [3.0, 4.0]], p)
    payload = p.read_bytes().split(b"\n", 1)[1]
    assert np.array_equal(np.frombuffer(payload, "<f4"), [1, 2, 3, 4])


def test_round_trip_1000_random_grids(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "g.srf"
    for _ in range(1000):
        r, c = rng.integers(1, 9, size=2)
        # stored as float32, so draw float32-representable values
        g = rng.normal(scale=10 ** rng.uniform(-3, 3), size=(r, c)).astype(np.float32)
        io.write_raster(g, p)
        back = io.read_raster(p)
        assert back.dtype == np.float64
        assert np.array_equal(back.astype(np.float32).view(np.uint32), g.view(np.uint32))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_decode_inverts_encode(r, c, data):
    vals = data.draw(st.lists(st.floats(-1e6, 1e6, width=32), min_size=r * c, max_size=r * c))
    g = np.array(vals, dtype=np.float64).reshape(r, c)
    assert np.array_equal(io.decode_raster(io.encode_raster(g)), g)


@pytest.mark.parametrize("blob, field", [
    (b"SRF2 f32 2 1 1\n\0\0\0\0", "magic"),
    (b"SRF1 f64 2 1 1\n\0\0\0\0", "dtype"),
    (b"SRF1 f32 3 1 1\n\0\0\0\0", "ndim"),
    (b"SRF1 f32 2 0 5\n", "rows"),
    (b"SRF1 f32 2 5 0\n", "cols"),
    (b"SRF1 f32 2 2 2\n\0\0\0\0", "payload shorter than header dims"),
])
def test_decode_errors_name_the_field(blob, field):
    with pytest.raises(io.FormatError, match=field):
        io.decode_raster(blob)


def test_write_error_names_path(tmp_path):
    bad = tmp_path / "missing_dir" / "x.srf"
    with pytest.raises(OSError, match="missing_dir"):
        io.write_raster(np.zeros((2, 2)), bad)


def test_write_does_not_modify_input(tmp_path):
    g = np.linspace(0, 1, 12).reshape(3, 4)
    before = g.copy()
    io.write_raster(g, tmp_path / "x.srf")
    assert np.array_equal(g, before)


def _pgm(tmp_path, body: bytes, name="x.pgm"):
    p = tmp_path / name
    p.write_bytes(body)
    return p


def test_pgm_scaling(tmp_path):
    p = _pgm(tmp_path, b"P5\n3 2\n255\n" + bytes([255] * 6))
    assert np.array_equal(io.read_pgm(p), np.ones((2, 3)))
    p = _pgm(tmp_path, b"P5\n1 1\n255\n" + bytes([128]))
    assert io.read_pgm(p)[0, 0] == pytest.approx(0.50196, abs=1e-5)


def test_pgm_hand_written_gradient(tmp_path):
    # 4x4 ramp 0, 16, ..., 240 typed in byte by byte, with a header comment
    body = (b"P5\n# gradient\n4 4\n255\n"
            b"\x00\x10\x20\x30"
            b"\x40\x50\x60\x70"
            b"\x80\x90\xa0\xb0"
            b"\xc0\xd0\xe0\xf0")
    got = io.read_pgm(_pgm(tmp_path, body))
    want = np.array([[0, 16, 32, 48], [64, 80, 96, 112],
                     [128, 144, 160, 176], [192, 208, 224, 240]]) / 255.0
    assert np.array_equal(got, want)


def test_pgm_16_bit_big_endian(tmp_path):
    p = _pgm(tmp_path, b"P5 2 1 65535\n" + b"\xff\xff\x80\x00")
    assert np.allclose(io.read_pgm(p), [[1.0, 0x8000 / 65535]])


@pytest.mark.parametrize("body, msg", [
    (b"P2\n1 1\n255\n1", "P5"),
    (b"P5\n1 1\n0\n\0", "maxval"),
    (b"P5\n2 2\n255\n\0", "shorter"),
])
def test_pgm_errors(tmp_path, body, msg):
    with pytest.raises(io.FormatError, match=msg):
        io.read_pgm(_pgm(tmp_path, body))


def test_pgm_writer_round_trip(tmp_path):
    g = np.arange(12).reshape(3, 4) / 11.0
    io.write_pgm(g, tmp_path / "a.pgm", maxval=11)
    assert np.allclose(io.read_pgm(tmp_path / "a.pgm"), g)


def test_rng_streams():
    a = io.make_rng(7, 3).random(10_000)
    b = io.make_rng(7, 3).random(10_000)
    assert np.array_equal(a, b)
    c = io.make_rng(7, 4).random(16)
    d = io.make_rng(8, 3).random(16)
    assert not np.any(a[:16] == c)
    assert not np.any(a[:16] == d)
    with pytest.raises(ValueError):
        io.make_rng(-1)


def _entry(i):
    return io.SampleEntry(f"s{i}", "texture:0", 1, i, f"s{i}_x.srf", f"s{i}_y.srf",
                          f"s{i}_ir.srf", f"s{i}_im.srf")


def test_manifest_round_trip_and_unknown_fields(tmp_path):
    m = io.DatasetManifest("desk", {"ir_fraction": 0.75}, [_entry(0), _entry(1)])
    for e in m.samples:
        for rel in (e.x, e.y, e.ir, e.im):
            io.write_raster(np.zeros((1, 1)), tmp_path / rel)
    path = tmp_path / "m.json"
    io.save_manifest(m, path)
    text = path.read_text().replace('"geometry_id"', '"future_field": 3, "geometry_id"')
    path.write_text(text)
    back = io.load_manifest(path)
    assert back.samples == m.samples
    assert back.resolve("s0_x.srf") == tmp_path / "s0_x.srf"


def test_manifest_missing_file_is_reported(tmp_path):
    m = io.DatasetManifest("desk", {}, [_entry(0)])
    io.save_manifest(m, tmp_path / "m.json")
    with pytest.raises(io.FormatError, match="s0_x.srf"):
        io.load_manifest(tmp_path / "m.json")
    assert io.load_manifest(tmp_path / "m.json", check_files=False).samples[0].sample_id == "s0"
