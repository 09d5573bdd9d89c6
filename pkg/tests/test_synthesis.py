import math

import numpy as np
import pytest

from ringct import io
from ringct.geometry import FanBeamGeometry, geometry_preset
from ringct.physics import apply_corruption
from ringct.projector import forward_project
from ringct.synthesis import (AUGMENTATIONS, CorruptionParams, generate_corpus, generate_pair,
                              load_samples, manifest_geometry, replay, write_corpus)

DESK = geometry_preset("desk")


def _same(a, b):
    return (np.array_equal(a.x_clean, b.x_clean) and np.array_equal(a.y_corrupt, b.y_corrupt)
            and np.array_equal(a.response.eta, b.response.eta)
            and np.array_equal(a.response.mask, b.response.mask))


def test_ten_augmentations_by_default():
    assert AUGMENTATIONS == 10


def test_pair_is_consistent_and_deterministic():
    gray = np.random.default_rng(0).random((40, 40))
    a = generate_pair(gray, DESK, seed=5, stream=3)
    b = generate_pair(gray, DESK, seed=5, stream=3)
    assert _same(a, b)
    assert np.array_equal(a.y_corrupt, apply_corruption(forward_project(a.x_clean, DESK),
                                                        a.response))
    c = generate_pair(gray, DESK, seed=5, stream=4)
    assert not np.array_equal(a.y_corrupt, c.y_corrupt)
    assert a.geometry_id == "desk" and a.seed == 5


def test_corpus_streams_and_sources():
    samples = generate_corpus(DESK, 12, seed=2, augmentations=4)
    assert [s.stream for s in samples] == list(range(12))
    assert [s.source for s in samples][::4] == ["texture:0", "texture:1", "texture:2"]
    # augmentations of one source share the resized image up to the mu scale
    a, b = samples[0].x_clean, samples[1].x_clean
    assert np.allclose(a / a.max(), b / b.max())


def test_corpus_independent_of_thread_count():
    one = generate_corpus(DESK, 6, seed=3, threads=1)
    many = generate_corpus(DESK, 6, seed=3, threads=3)
    assert all(_same(a, b) for a, b in zip(one, many))


def test_write_load_replay_bit_exact(tmp_path):
    params = CorruptionParams()
    samples = generate_corpus(DESK, 4, seed=9)
    path = write_corpus(samples, tmp_path / "ds", params)
    back = load_samples(path)
    for s, b in zip(samples, back):
        # rasters are float32 on disk
        assert np.array_equal(b.x_clean, s.x_clean.astype(np.float32))
        assert np.array_equal(b.y_corrupt, s.y_corrupt.astype(np.float32))
        assert np.array_equal(b.response.mask, s.response.mask)
    for i in range(4):
        assert _same(replay(path, i), samples[i])


def test_pgm_sources_replay(tmp_path):
    src = tmp_path / "src.pgm"
    io.write_pgm(np.random.default_rng(1).random((30, 30)), src)
    gray = io.read_pgm(src)
    samples = generate_corpus(DESK, 3, seed=1, sources=[(str(src), gray)], augmentations=3)
    path = write_corpus(samples, tmp_path / "ds", CorruptionParams())
    assert _same(replay(path, 2), samples[2])


def test_inline_geometry_is_stored(tmp_path):
    g = FanBeamGeometry(16, 1.0, 24, 2.0, 32, 0.0, 2 * math.pi, 40.0, 40.0, "lab")
    samples = generate_corpus(g, 2, seed=0)
    path = write_corpus(samples, tmp_path / "ds", CorruptionParams(), g=g)
    m = io.load_manifest(path)
    assert manifest_geometry(m) == g
    assert _same(replay(path, 1), samples[1])


def test_corruption_params_round_trip():
    p = CorruptionParams(0.5, 0.1, (0.8, 1.2), (0.5, 0.6))
    assert CorruptionParams.from_dict(p.to_dict()) == p


def test_empty_corpus_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_corpus([], tmp_path, CorruptionParams())
