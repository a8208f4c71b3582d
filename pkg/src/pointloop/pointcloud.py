"""Colored point clouds: loading, normalization, and multi-view rendering.

The renderer is a deterministic orthographic splatter: cameras orbit the
up-axis (+y) at evenly spaced azimuths and a single elevation, points are
drawn as square splats through a per-pixel depth buffer. No lighting, no
perspective. Views land in the raster with +y up and azimuth 0 looking down
the -z axis.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

__all__ = [
    "PointCloud",
    "RenderConfig",
    "RenderedView",
    "PointCloudFormatError",
    "MalformedHeaderError",
    "NonFiniteCoordinateError",
    "TruncatedPayloadError",
    "load_point_cloud",
    "normalize_to_unit_sphere",
    "render_views",
    "encode_png",
    "decode_png",
]

FORMATS = ("ascii-ply", "xyzrgb-text", "f32-binary")


class PointCloudFormatError(ValueError):
    """A point-cloud file could not be parsed.

    Carries `line` (1-based) for text formats or `byte_offset` for binary.
    """

    def __init__(self, message: str, *, line: int | None = None, byte_offset: int | None = None):
        pos = ""
        if line is not None:
            pos = f" (line {line})"
        elif byte_offset is not None:
            pos = f" (byte {byte_offset})"
        super().__init__(message + pos)
        self.line = line
        self.byte_offset = byte_offset


class MalformedHeaderError(PointCloudFormatError):
    pass


class NonFiniteCoordinateError(PointCloudFormatError):
    pass


class TruncatedPayloadError(PointCloudFormatError):
    pass


@dataclass
class PointCloud:
    """N points with xyz coordinates and rgb colors in [0, 1]."""

    object_id: str
    xyz: np.ndarray  # (N, 3) float64
    rgb: np.ndarray  # (N, 3) float64 in [0, 1]

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64)
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {self.xyz.shape}")
        if self.rgb.shape != self.xyz.shape:
            raise ValueError(f"rgb shape {self.rgb.shape} != xyz shape {self.xyz.shape}")
        if len(self.xyz) < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.isfinite(self.xyz).all():
            raise ValueError("non-finite coordinate in point cloud")
        if ((self.rgb < 0) | (self.rgb > 1)).any():
            raise ValueError("color channel outside [0, 1]")

    def __len__(self) -> int:
        return len(self.xyz)


@dataclass(frozen=True)
class RenderConfig:
    n_views: int = 12
    image_size: int = 512
    elevation_deg: float = 30.0
    azimuth_start_deg: float = 0.0
    point_radius_px: int = 2
    background: tuple[int, int, int, int] = (255, 255, 255, 255)
    # Fraction of the half-extent used by the unit sphere; leaves a margin.
    fill: float = 0.9

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")
        if self.point_radius_px < 0:
            raise ValueError("point_radius_px must be >= 0")

    def azimuths(self) -> list[float]:
        step = 360.0 / self.n_views
        return [self.azimuth_start_deg + i * step for i in range(self.n_views)]


@dataclass
class RenderedView:
    azimuth_deg: float
    elevation_deg: float
    image: np.ndarray = field(repr=False)  # (S, S, 4) uint8, row-major

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.uint8)
        if self.image.ndim != 3 or self.image.shape[2] != 4 or self.image.shape[0] != self.image.shape[1]:
            raise ValueError(f"image must be (S, S, 4), got {self.image.shape}")


# ---------------------------------------------------------------------------
# Loading


def load_point_cloud(path, format: str) -> PointCloud:
    """Parse a point cloud file; colors stated 0-255 are rescaled to [0, 1]."""
    path = str(path)
    object_id = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    if format == "ascii-ply":
        xyz, rgb = _parse_ascii_ply(path)
    elif format == "xyzrgb-text":
        xyz, rgb = _parse_xyzrgb_text(path)
    elif format == "f32-binary":
        xyz, rgb = _parse_f32_binary(path)
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    return PointCloud(object_id=object_id, xyz=xyz, rgb=rgb)


_PLY_COLOR_NAMES = {"red": 0, "green": 1, "blue": 2, "r": 0, "g": 1, "b": 2}
_PLY_COORD_NAMES = {"x": 0, "y": 1, "z": 2}
_PLY_BYTE_TYPES = {"uchar", "uint8", "char", "int8"}


def _parse_ascii_ply(path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedHeaderError("missing 'ply' magic", line=1)

    n_vertices = None
    properties: list[tuple[str, str]] = []  # (type, name) of the vertex element
    in_vertex_element = False
    data_start = None
    for idx, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens:
            continue
        kw = tokens[0]
        if kw == "comment":
            continue
        if kw == "format":
            if tokens[1:2] != ["ascii"]:
                raise MalformedHeaderError(f"unsupported format {raw.strip()!r}", line=idx)
        elif kw == "element":
            if len(tokens) != 3:
                raise MalformedHeaderError(f"bad element line {raw.strip()!r}", line=idx)
            if tokens[1] == "vertex":
                try:
                    n_vertices = int(tokens[2])
                except ValueError:
                    raise MalformedHeaderError(f"bad vertex count {tokens[2]!r}", line=idx)
                in_vertex_element = True
            else:
                in_vertex_element = False
        elif kw == "property":
            if in_vertex_element:
                if len(tokens) != 3:
                    raise MalformedHeaderError(f"bad property line {raw.strip()!r}", line=idx)
                properties.append((tokens[1], tokens[2]))
        elif kw == "end_header":
            data_start = idx
            break
        else:
            raise MalformedHeaderError(f"unexpected header keyword {kw!r}", line=idx)
    if data_start is None:
        raise MalformedHeaderError("missing end_header", line=len(lines))
    if n_vertices is None:
        raise MalformedHeaderError("missing 'element vertex' declaration", line=data_start)
    if n_vertices < 1:
        raise MalformedHeaderError(f"vertex count must be >= 1, got {n_vertices}", line=data_start)

    prop_names = [name for _, name in properties]
    for needed in ("x", "y", "z", ):
        if needed not in prop_names:
            raise MalformedHeaderError(f"vertex element missing property {needed!r}", line=data_start)
    color_cols = {}
    color_is_byte = {}
    for col, (ptype, name) in enumerate(properties):
        if name in _PLY_COORD_NAMES:
            pass
        if name in _PLY_COLOR_NAMES:
            color_cols[_PLY_COLOR_NAMES[name]] = col
            color_is_byte[_PLY_COLOR_NAMES[name]] = ptype in _PLY_BYTE_TYPES
    if sorted(color_cols) != [0, 1, 2]:
        raise MalformedHeaderError("vertex element missing red/green/blue properties", line=data_start)
    coord_cols = {i: prop_names.index(n) for n, i in _PLY_COORD_NAMES.items()}

    xyz = np.empty((n_vertices, 3), dtype=np.float64)
    rgb = np.empty((n_vertices, 3), dtype=np.float64)
    data_lines = lines[data_start:]
    row = 0
    for offset, raw in enumerate(data_lines):
        if row >= n_vertices:
            break
        lineno = data_start + 1 + offset
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) < len(properties):
            raise TruncatedPayloadError(
                f"expected {len(properties)} values, got {len(tokens)}", line=lineno)
        try:
            values = [float(t) for t in tokens[: len(properties)]]
        except ValueError as exc:
            raise PointCloudFormatError(f"non-numeric value: {exc}", line=lineno)
        for axis, col in coord_cols.items():
            v = values[col]
            if not math.isfinite(v):
                raise NonFiniteCoordinateError(f"non-finite coordinate {v!r}", line=lineno)
            xyz[row, axis] = v
        for chan, col in color_cols.items():
            v = values[col]
            if color_is_byte[chan]:
                v = v / 255.0
            if not (0.0 <= v <= 1.0) or not math.isfinite(v):
                raise PointCloudFormatError(f"color channel out of range: {v!r}", line=lineno)
            rgb[row, chan] = v
        row += 1
    if row < n_vertices:
        raise TruncatedPayloadError(
            f"declared {n_vertices} vertices but found {row}", line=len(lines))
    return xyz, rgb


def _parse_xyzrgb_text(path):
    rows = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if len(tokens) != 6:
                raise TruncatedPayloadError(
                    f"expected 6 values (x y z r g b), got {len(tokens)}", line=lineno)
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise PointCloudFormatError(f"non-numeric value: {exc}", line=lineno)
            for v in values[:3]:
                if not math.isfinite(v):
                    raise NonFiniteCoordinateError(f"non-finite coordinate {v!r}", line=lineno)
            for v in values[3:]:
                if not math.isfinite(v) or v < 0:
                    raise PointCloudFormatError(f"bad color value {v!r}", line=lineno)
            rows.append(values)
    if not rows:
        raise TruncatedPayloadError("file declares no points", line=1)
    arr = np.array(rows, dtype=np.float64)
    xyz, rgb = arr[:, :3], arr[:, 3:]
    # Whole-file color scale: any channel above 1 means the file is 0-255.
    if rgb.max() > 1.0:
        rgb = rgb / 255.0
    return xyz, rgb


def _parse_f32_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise MalformedHeaderError("missing 8-byte count header", byte_offset=len(blob))
    (count,) = struct.unpack_from("<Q", blob, 0)
    if count < 1:
        raise MalformedHeaderError(f"point count must be >= 1, got {count}", byte_offset=0)
    need = 8 + count * 6 * 4
    if len(blob) < need:
        raise TruncatedPayloadError(
            f"need {need} bytes for {count} points, file has {len(blob)}",
            byte_offset=len(blob))
    arr = np.frombuffer(blob, dtype="<f4", count=count * 6, offset=8).astype(np.float64)
    arr = arr.reshape(count, 6)
    xyz, rgb = arr[:, :3], arr[:, 3:]
    if not np.isfinite(xyz).all():
        bad = int(np.argwhere(~np.isfinite(xyz))[0][0])
        raise NonFiniteCoordinateError(
            "non-finite coordinate", byte_offset=8 + bad * 24)
    if not np.isfinite(rgb).all() or (rgb < 0).any():
        raise PointCloudFormatError("bad color value", byte_offset=8)
    if rgb.max() > 1.0:
        rgb = rgb / 255.0
    return xyz, rgb


# ---------------------------------------------------------------------------
# Normalization and rendering


def normalize_to_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center at the centroid and scale so the farthest point sits at radius 1.

    A cloud whose points all coincide collapses to the origin (radius 0).
    """
    centered = cloud.xyz - cloud.xyz.mean(axis=0)
    radius = float(np.linalg.norm(centered, axis=1).max())
    if radius > 0:
        centered = centered / radius
    return PointCloud(object_id=cloud.object_id, xyz=centered, rgb=cloud.rgb.copy())


def _camera_basis(azimuth_deg: float, elevation_deg: float):
    a = math.radians(azimuth_deg)
    e = math.radians(elevation_deg)
    right = np.array([math.cos(a), 0.0, math.sin(a)])
    up = np.array([math.sin(e) * math.sin(a), math.cos(e), -math.sin(e) * math.cos(a)])
    forward = np.array([math.cos(e) * math.sin(a), -math.sin(e), -math.cos(e) * math.cos(a)])
    return right, up, forward


def _render_one(cloud: PointCloud, cfg: RenderConfig, azimuth_deg: float) -> RenderedView:
    right, up, forward = _camera_basis(azimuth_deg, cfg.elevation_deg)
    sx = cloud.xyz @ right
    sy = cloud.xyz @ up
    depth = cloud.xyz @ forward

    size = cfg.image_size
    half = (size - 1) / 2.0
    scale = half * cfg.fill
    px = np.rint(half + sx * scale).astype(np.int64)
    py = np.rint(half - sy * scale).astype(np.int64)

    image = np.empty((size, size, 4), dtype=np.uint8)
    image[:, :] = np.array(cfg.background, dtype=np.uint8)
    zbuf = np.full((size, size), np.inf, dtype=np.float64)

    colors = np.rint(cloud.rgb * 255.0).astype(np.uint8)
    r = cfg.point_radius_px
    for i in range(len(cloud.xyz)):
        cx, cy, d = px[i], py[i], depth[i]
        x0, x1 = max(cx - r, 0), min(cx + r, size - 1)
        y0, y1 = max(cy - r, 0), min(cy + r, size - 1)
        if x0 > x1 or y0 > y1:
            continue
        patch = zbuf[y0:y1 + 1, x0:x1 + 1]
        mask = d < patch
        if mask.any():
            patch[mask] = d
            block = image[y0:y1 + 1, x0:x1 + 1]
            block[mask] = (colors[i, 0], colors[i, 1], colors[i, 2], 255)
    return RenderedView(azimuth_deg=azimuth_deg, elevation_deg=cfg.elevation_deg, image=image)


def render_views(cloud: PointCloud, cfg: RenderConfig | None = None) -> list[RenderedView]:
    """Render the cloud from cfg.n_views evenly spaced azimuths.

    Pure: identical cloud + config give byte-identical rasters. Nearer points
    (smaller camera-space depth) win each pixel; depth ties go to the
    earliest point in input order.
    """
    cfg = cfg or RenderConfig()
    return [_render_one(cloud, cfg, az) for az in cfg.azimuths()]


def encode_png(view: RenderedView) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(view.image, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGBA"), dtype=np.uint8)
