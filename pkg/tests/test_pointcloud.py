import math
import struct

import numpy as np
import pytest

from pointloop.pointcloud import (
    MalformedHeaderError,
    NonFiniteCoordinateError,
    PointCloud,
    PointCloudFormatError,
    RenderConfig,
    TruncatedPayloadError,
    decode_png,
    encode_png,
    load_point_cloud,
    normalize_to_unit_sphere,
    render_views,
)

from conftest import make_cloud, rotate_y


PLY_HEADER = """ply
format ascii 1.0
element vertex {n}
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
end_header
"""


def write_ply(path, rows, n=None):
    path.write_text(PLY_HEADER.format(n=len(rows) if n is None else n)
                    + "".join(r + "\n" for r in rows))
    return path


# ---------------------------------------------------------------------------
# Loading


def test_ply_single_point_color_rescale(tmp_path):
    p = write_ply(tmp_path / "one.ply", ["0 0 0 255 0 0"])
    cloud = load_point_cloud(p, "ascii-ply")
    assert len(cloud) == 1
    assert cloud.object_id == "one"
    np.testing.assert_allclose(cloud.rgb[0], [1.0, 0.0, 0.0])


def test_ply_three_point_fixture(tmp_path):
    rows = [
        "0.5 -1.25 3.0 0 128 255",
        "-2.0 0.0 0.125 255 255 0",
        "1.0 2.5 -0.5 10 20 30",
    ]
    cloud = load_point_cloud(write_ply(tmp_path / "three.ply", rows), "ascii-ply")
    np.testing.assert_allclose(
        cloud.xyz,
        [[0.5, -1.25, 3.0], [-2.0, 0.0, 0.125], [1.0, 2.5, -0.5]])
    np.testing.assert_allclose(
        cloud.rgb,
        [[0, 128 / 255, 1.0], [1.0, 1.0, 0.0], [10 / 255, 20 / 255, 30 / 255]])


def test_ply_nan_coordinate(tmp_path):
    p = write_ply(tmp_path / "bad.ply", ["0 nan 0 255 0 0"])
    with pytest.raises(NonFiniteCoordinateError) as exc:
        load_point_cloud(p, "ascii-ply")
    assert exc.value.line == 11


def test_ply_malformed_header(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("not a ply\n")
    with pytest.raises(MalformedHeaderError):
        load_point_cloud(p, "ascii-ply")
    p.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(MalformedHeaderError):
        load_point_cloud(p, "ascii-ply")


def test_ply_truncated_payload(tmp_path):
    p = write_ply(tmp_path / "short.ply", ["0 0 0 1 2 3"], n=3)
    with pytest.raises(TruncatedPayloadError):
        load_point_cloud(p, "ascii-ply")


def test_ply_short_row(tmp_path):
    p = write_ply(tmp_path / "row.ply", ["0 0 0 1"])
    with pytest.raises(TruncatedPayloadError) as exc:
        load_point_cloud(p, "ascii-ply")
    assert exc.value.line == 11


def test_xyzrgb_scale_rule(tmp_path):
    p = tmp_path / "a.xyz"
    p.write_text("0 0 0 255 0 0\n1 1 1 0 128 0\n")
    cloud = load_point_cloud(p, "xyzrgb-text")
    np.testing.assert_allclose(cloud.rgb, [[1, 0, 0], [0, 128 / 255, 0]])
    # All channels <= 1: already unit scale, kept as-is.
    p.write_text("0 0 0 1 0 0\n1 1 1 0 0.5 0\n")
    cloud = load_point_cloud(p, "xyzrgb-text")
    np.testing.assert_allclose(cloud.rgb, [[1, 0, 0], [0, 0.5, 0]])


def test_xyzrgb_errors(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 inf 1 0 0\n")
    with pytest.raises(NonFiniteCoordinateError) as exc:
        load_point_cloud(p, "xyzrgb-text")
    assert exc.value.line == 1
    p.write_text("0 0 0 1 0\n")
    with pytest.raises(TruncatedPayloadError):
        load_point_cloud(p, "xyzrgb-text")
    p.write_text("")
    with pytest.raises(TruncatedPayloadError):
        load_point_cloud(p, "xyzrgb-text")


def test_f32_binary_roundtrip(tmp_path):
    vals = [0.5, -1.0, 2.0, 0.25, 0.5, 1.0, 3.0, 4.0, 5.0, 1.0, 0.0, 0.0]
    blob = struct.pack("<Q", 2) + struct.pack("<12f", *vals)
    p = tmp_path / "c.bin"
    p.write_bytes(blob)
    cloud = load_point_cloud(p, "f32-binary")
    assert len(cloud) == 2
    np.testing.assert_allclose(cloud.xyz[0], [0.5, -1.0, 2.0])
    np.testing.assert_allclose(cloud.rgb[1], [1.0, 0.0, 0.0])


def test_f32_binary_truncated(tmp_path):
    blob = struct.pack("<Q", 2) + struct.pack("<6f", *([0.0] * 6))
    p = tmp_path / "t.bin"
    p.write_bytes(blob)
    with pytest.raises(TruncatedPayloadError) as exc:
        load_point_cloud(p, "f32-binary")
    assert exc.value.byte_offset == len(blob)
    p.write_bytes(b"\x01\x02")
    with pytest.raises(MalformedHeaderError):
        load_point_cloud(p, "f32-binary")


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError, match="unknown format"):
        load_point_cloud(tmp_path / "x", "obj")


def test_cloud_invariants():
    with pytest.raises(ValueError):
        PointCloud("x", np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud("x", [[0, 0, np.inf]], [[0, 0, 0]])
    with pytest.raises(ValueError):
        PointCloud("x", [[0, 0, 0]], [[0, 0, 2.0]])


# ---------------------------------------------------------------------------
# Normalization


def test_normalize_already_unit():
    cloud = PointCloud("x", [[1, 0, 0], [-1, 0, 0]], [[1, 0, 0], [0, 1, 0]])
    out = normalize_to_unit_sphere(cloud)
    np.testing.assert_allclose(out.xyz, cloud.xyz, atol=1e-9)


def test_normalize_shift_and_scale():
    cloud = PointCloud("x", [[2, 0, 0], [4, 0, 0]], [[1, 0, 0], [0, 1, 0]])
    out = normalize_to_unit_sphere(cloud)
    np.testing.assert_allclose(out.xyz, [[-1, 0, 0], [1, 0, 0]], atol=1e-9)


def test_normalize_single_point():
    out = normalize_to_unit_sphere(PointCloud("x", [[5, -3, 2]], [[0, 0, 0]]))
    np.testing.assert_allclose(out.xyz, [[0, 0, 0]], atol=1e-9)


def test_normalize_invariants_random():
    out = make_cloud(n=257, seed=11)
    assert np.abs(out.xyz.mean(axis=0)).max() < 1e-9
    assert abs(np.linalg.norm(out.xyz, axis=1).max() - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# Rendering


def small_cfg(**kw):
    kw.setdefault("image_size", 32)
    kw.setdefault("point_radius_px", 1)
    return RenderConfig(**kw)


def test_azimuth_spacing_default():
    assert RenderConfig().azimuths() == [30.0 * i for i in range(12)]


def test_single_point_center_pixel_all_views():
    cloud = PointCloud("dot", [[0, 0, 0]], [[1, 0, 0]])
    cfg = small_cfg()
    views = render_views(cloud, cfg)
    assert len(views) == 12
    c = cfg.image_size // 2
    for v in views:
        assert v.image.shape == (32, 32, 4)
        assert tuple(v.image[c, c]) == (255, 0, 0, 255)


def test_occlusion_on_camera_axis():
    # Two points along the azimuth-0 camera direction; the nearer one (larger
    # multiple of the camera vector) must win the center pixel.
    e = math.radians(30.0)
    cam = np.array([0.0, math.sin(e), math.cos(e)])
    cloud = PointCloud(
        "pair",
        np.stack([0.4 * cam, 0.8 * cam]),
        [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],  # far blue, near red
    )
    cfg = small_cfg()
    view0 = render_views(cloud, cfg)[0]
    c = cfg.image_size // 2
    assert tuple(view0.image[c, c]) == (255, 0, 0, 255)
    # Input order must not matter: depth decides.
    flipped = PointCloud(
        "pair2",
        np.stack([0.8 * cam, 0.4 * cam]),
        [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    )
    view0b = render_views(flipped, cfg)[0]
    assert tuple(view0b.image[c, c]) == (255, 0, 0, 255)


def test_render_deterministic():
    cloud = make_cloud(n=100, seed=3)
    cfg = small_cfg(image_size=64)
    a = render_views(cloud, cfg)
    b = render_views(cloud, cfg)
    for va, vb in zip(a, b):
        assert np.array_equal(va.image, vb.image)


def test_rotational_consistency_pixel_exact():
    # Rotating the cloud +30 deg about +y and rendering at azimuth a equals
    # rendering the original at azimuth a+30.
    cloud = make_cloud(n=100, seed=42)
    cfg = small_cfg(image_size=64)
    views = render_views(cloud, cfg)
    rotated_views = render_views(rotate_y(cloud, 30.0), cfg)
    for i in range(cfg.n_views):
        shifted = views[(i + 1) % cfg.n_views]
        assert np.array_equal(rotated_views[i].image, shifted.image), f"azimuth index {i}"


def test_background_pixels():
    cloud = PointCloud("dot", [[0, 0, 0]], [[0, 1, 0]])
    cfg = small_cfg(background=(10, 20, 30, 255))
    img = render_views(cloud, cfg)[0].image
    corners = [img[0, 0], img[0, -1], img[-1, 0], img[-1, -1]]
    for px in corners:
        assert tuple(px) == (10, 20, 30, 255)


# ---------------------------------------------------------------------------
# PNG


def test_png_roundtrip_background_only():
    cloud = PointCloud("p", [[5, 5, 5]], [[0, 0, 0]])  # point projects off-frame
    cfg = small_cfg(image_size=16, fill=0.1)
    view = render_views(cloud, cfg)[0]
    data = encode_png(view)
    assert data.startswith(b"\x89PNG")
    assert np.array_equal(decode_png(data), view.image)


def test_png_roundtrip_single_pixel():
    cloud = PointCloud("p", [[0, 0, 0]], [[1, 0, 0]])
    view = render_views(cloud, small_cfg(image_size=16, point_radius_px=0))[0]
    assert np.array_equal(decode_png(encode_png(view)), view.image)


def test_png_distinct_views_distinct_bytes():
    cloud = make_cloud(n=40, seed=9)
    views = render_views(cloud, small_cfg())
    assert encode_png(views[0]) != encode_png(views[1])
