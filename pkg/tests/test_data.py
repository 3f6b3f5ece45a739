import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgbd_inpaint import data, netpbm
from rgbd_inpaint.models import MaskRect


# -- netpbm -----------------------------------------------------------------

def test_hand_written_ppm_fixture():
    buf = b"P6\n# two by two\n2 2\n255\n" + bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30])
    img = netpbm.decode(buf)
    assert img.shape == (2, 2, 3)
    np.testing.assert_array_equal(img[0, 0], [255, 0, 0])
    np.testing.assert_array_equal(img[1, 1], [10, 20, 30])


def test_sixteen_bit_pgm_is_big_endian():
    img = netpbm.decode(b"P5 2 1 65535\n" + bytes([0x01, 0x02, 0xFF, 0xFE]))
    np.testing.assert_array_equal(img, [[0x0102, 0xFFFE]])


def test_netpbm_roundtrip():
    rgb = np.random.default_rng(0).integers(0, 256, (5, 7, 3)).astype(np.uint8)
    np.testing.assert_array_equal(netpbm.decode(netpbm.encode(rgb, 255)), rgb)
    dep = np.random.default_rng(1).integers(0, 65536, (4, 3)).astype(np.uint16)
    np.testing.assert_array_equal(netpbm.decode(netpbm.encode(dep, 65535)), dep)


@pytest.mark.parametrize("buf", [b"P3\n1 1\n255\n0 0 0", b"P6\n2 2\n255\n" + bytes(5), b"P5\n2\n", b"P5 1 1 0\n\x00"])
def test_netpbm_malformed(buf):
    with pytest.raises(netpbm.NetpbmError):
        netpbm.decode(buf)


# -- synthetic scenes ---------------------------------------------------------

def test_synth_scene_deterministic():
    a, b = data.synth_scene(7, 32), data.synth_scene(7, 32)
    np.testing.assert_array_equal(a.rgb, b.rgb)
    np.testing.assert_array_equal(a.depth, b.depth)
    assert not np.array_equal(a.rgb, data.synth_scene(8, 32).rgb)


def test_synth_scene_ranges():
    s = data.synth_scene(3, 32)
    assert s.rgb.dtype == np.uint8 and s.rgb.shape == (32, 32, 3)
    assert s.depth.min() > 0 and s.depth.max() <= 10.0


def test_depth_edges_coincide_with_colour_edges():
    """Every depth discontinuity is also a colour discontinuity."""
    s = data.synth_scene(11, 48)
    for axis in (0, 1):
        dd = np.abs(np.diff(s.depth, axis=axis))
        dc = np.abs(np.diff(s.rgb.astype(int), axis=axis)).sum(-1)
        # background gradient steps are tiny; box edges are large jumps
        jumps = dd > 0.1
        assert jumps.any()
        assert np.all(dc[jumps] > 0)


def test_synth_scene_small_size_rejected():
    with pytest.raises(ValueError):
        data.synth_scene(0, 8)


# -- normalization --------------------------------------------------------------

def test_normalization_endpoints():
    np.testing.assert_array_equal(data.normalize_rgb(np.array([0, 255])), [-1.0, 1.0])
    assert data.normalize_depth(np.array([5.0]), 10.0)[0] == 0.0
    with pytest.raises(ValueError):
        data.normalize_rgb(np.array([256]))
    with pytest.raises(ValueError):
        data.normalize_depth(np.array([11.0]), 10.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.floats(0.5, 100))
def test_denormalize_normalize_identity(vals, d_max):
    x = np.array(vals)
    np.testing.assert_allclose(data.normalize_depth(data.denormalize_depth(x, d_max), d_max), x, atol=1e-6)
    np.testing.assert_allclose(data.normalize_rgb(data.denormalize_rgb(x)), x, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=20))
def test_normalization_preserves_depth_order(vals):
    x = np.sort(np.array(vals))
    n = data.normalize_depth(x, 10.0)
    assert np.all(np.diff(n) >= 0)


# -- masks -----------------------------------------------------------------------

def test_hole_sides_between_eighth_and_half_at_256():
    rng = np.random.default_rng(0)
    sizes = [data.sample_mask(rng, 256)[0] for _ in range(2000)]
    hs = [r.height for r in sizes] + [r.width for r in sizes]
    assert min(hs) >= 32 and max(hs) <= 128


def test_masks_always_fit():
    rng = np.random.default_rng(5)
    for size in (8, 16, 64):
        for _ in range(100_000 // 3):
            assert data.sample_mask(rng, size)[0].fits(size)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([8, 16, 32, 64]))
def test_mask_counts(seed, size):
    rect, m = data.sample_mask(np.random.default_rng(seed), size)
    assert m.sum() == size * size - rect.height * rect.width
    assert set(np.unique(m)) <= {0.0, 1.0}


def test_apply_mask_cases():
    x = np.random.default_rng(0).normal(size=(3, 8, 8))
    np.testing.assert_array_equal(data.apply_mask(x, np.ones((8, 8))), x)
    assert not data.apply_mask(x, np.zeros((8, 8))).any()
    m = data.rect_mask(MaskRect(2, 3, 4, 2), 8)
    z = data.apply_mask(x, m)
    for c in range(3):
        for i in range(8):
            for j in range(8):
                if m[i, j] == 0:
                    assert z[c, i, j] == 0
                else:
                    assert z[c, i, j] == x[c, i, j]
    np.testing.assert_array_equal(data.apply_mask(z, m), z)


def test_external_mask_silhouette(tmp_path):
    m = np.full((16, 16), 255, np.uint8)
    m[2:6, 4:9] = 0
    m[5:12, 7:10] = 0  # L-shaped object
    netpbm.write(tmp_path / "m.pgm", m)
    mask, bbox = data.load_external_mask(tmp_path / "m.pgm", 16)
    rows, cols = np.nonzero(m == 0)
    assert bbox == MaskRect(rows.min(), cols.min(), rows.max() - rows.min() + 1, cols.max() - cols.min() + 1)
    assert mask.sum() == (m == 255).sum()


def test_external_mask_errors(tmp_path):
    m = np.full((8, 8), 255, np.uint8)
    netpbm.write(tmp_path / "ok.pgm", m)
    assert data.load_external_mask(tmp_path / "ok.pgm", 8)[1] is None
    with pytest.raises(ValueError):
        data.load_external_mask(tmp_path / "ok.pgm", 16)
    m[0, 0] = 128
    netpbm.write(tmp_path / "grey.pgm", m)
    with pytest.raises(ValueError):
        data.load_external_mask(tmp_path / "grey.pgm", 8)


# -- dataset files -----------------------------------------------------------------

def test_write_read_roundtrip(tmp_path):
    s = data.synth_scene(2, 16, sample_id="000000")
    data.write_sample(s, tmp_path, 10.0)
    index = data.write_index(tmp_path, ["000000"], 10.0)
    back = data.read_sample(data.load_index(tmp_path), "000000")
    np.testing.assert_array_equal(back.rgb, s.rgb)
    assert np.abs(back.depth - s.depth).max() <= 10.0 / 65535
    assert index.d_max == 10.0


def test_generate_dataset_deterministic(tmp_path):
    data.generate_dataset(tmp_path / "a", 3, 16, seed=9)
    data.generate_dataset(tmp_path / "b", 3, 16, seed=9)
    for sub in ("index.txt", "rgb/000002.ppm", "depth/000001.pgm"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()
    ds = data.Dataset.from_index(data.load_index(tmp_path / "a"))
    assert ds.rgb.shape == (3, 3, 16, 16) and ds.depth.shape == (3, 1, 16, 16)
    assert ds.rgb.min() >= -1 and ds.rgb.max() <= 1


def test_missing_depth_names_id(tmp_path):
    data.generate_dataset(tmp_path, 2, 16, seed=1)
    (tmp_path / "depth" / "000001.pgm").unlink()
    with pytest.raises(data.DatasetError, match="000001"):
        data.load_index(tmp_path)


def test_index_requires_dmax_header(tmp_path):
    (tmp_path / "index.txt").write_text("000000\n")
    with pytest.raises(data.DatasetError):
        data.load_index(tmp_path)


def test_index_ids_sorted_unique():
    with pytest.raises(data.DatasetError):
        data.DatasetIndex("x", ["b", "a"])
    with pytest.raises(data.DatasetError):
        data.DatasetIndex("x", ["a", "a"])
