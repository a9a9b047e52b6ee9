"""Self-contained readers/writers for the two geospatial formats the pipeline touches.

Supported subsets (everything else is rejected with :class:`FormatError`):

* GeoTIFF: TIFF 6.0 baseline, either byte order, single band, striped,
  uncompressed or Deflate, integer/float samples of 8/16/32/64 bits.
  Georeferencing comes from ModelTiepointTag (33922) + ModelPixelScaleTag
  (33550); nodata from the GDAL_NODATA ASCII tag (42113).
* Shapefile: the .shp main file only; shape types Point (1), PolyLine (3)
  and Polygon (5); null shapes are skipped.

All raster samples widen to float64 on read so downstream code has a single
numeric path.
"""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FormatError",
    "GeoTransform",
    "RasterDataset",
    "Geometry",
    "VectorDataset",
    "read_geotiff",
    "write_geotiff",
    "read_shapefile",
    "write_shapefile",
]


class FormatError(ValueError):
    """Input bytes fall outside the supported TIFF/shapefile subset."""


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel->world mapping: origin at the top-left corner of the
    top-left pixel, rows growing southward. ``pixel_h`` is stored positive."""

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float

    def __post_init__(self):
        if self.pixel_w <= 0 or self.pixel_h <= 0:
            raise ValueError("pixel sizes must be positive")

    def pixel_center(self, row, col):
        x = self.origin_x + (col + 0.5) * self.pixel_w
        y = self.origin_y - (row + 0.5) * self.pixel_h
        return x, y


@dataclass
class RasterDataset:
    """Single-band georeferenced grid of float64 values."""

    width: int
    height: int
    transform: GeoTransform
    values: np.ndarray
    nodata: float | None = None
    kind: str = "continuous"
    crs_code: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(
            self.height, self.width
        )
        if self.nodata is not None:
            self.nodata = float(self.nodata)
        if self.kind not in ("continuous", "categorical"):
            raise ValueError(f"unknown raster kind {self.kind!r}")
        if self.kind == "categorical":
            valid = self.values[~self.nodata_mask()]
            if valid.size and not np.array_equal(valid, np.floor(valid)):
                raise ValueError("categorical raster holds non-integral values")

    def nodata_mask(self):
        """Boolean grid marking nodata cells (NaN-aware)."""
        if self.nodata is None:
            return np.zeros(self.values.shape, dtype=bool)
        if np.isnan(self.nodata):
            return np.isnan(self.values)
        return self.values == self.nodata


@dataclass
class Geometry:
    """One point, polyline or polygon in projected meters.

    ``coordinates`` holds one vertex sequence per part: a single one-vertex
    sequence for points, a single sequence for (already flattened) polylines,
    and one sequence per ring for polygons with the outer ring first.
    Polygon rings are normalized to be closed.
    """

    variant: str
    coordinates: list = field(default_factory=list)

    def __post_init__(self):
        if self.variant not in ("point", "polyline", "polygon"):
            raise ValueError(f"unknown geometry variant {self.variant!r}")
        self.coordinates = [
            [(float(x), float(y)) for x, y in part] for part in self.coordinates
        ]
        if self.variant == "point":
            if len(self.coordinates) != 1 or len(self.coordinates[0]) != 1:
                raise ValueError("point geometry needs exactly one vertex")
        elif self.variant == "polyline":
            for part in self.coordinates:
                if len(part) < 2:
                    raise ValueError("polyline part needs at least 2 vertices")
        else:
            if not self.coordinates:
                raise ValueError("polygon needs at least one ring")
            closed = []
            for ring in self.coordinates:
                if ring and ring[0] != ring[-1]:
                    ring = ring + [ring[0]]
                if len(ring) < 4:
                    raise ValueError("polygon ring needs at least 3 distinct vertices")
                closed.append(ring)
            self.coordinates = closed

    def vertices(self):
        for part in self.coordinates:
            yield from part


@dataclass
class VectorDataset:
    """Homogeneous collection of geometries plus their vertex bounding box."""

    geometries: list
    bbox: tuple | None = None

    def __post_init__(self):
        variants = {g.variant for g in self.geometries}
        if len(variants) > 1:
            raise ValueError(f"mixed geometry variants: {sorted(variants)}")
        xs, ys = [], []
        for g in self.geometries:
            for x, y in g.vertices():
                xs.append(x)
                ys.append(y)
        self.bbox = (min(xs), min(ys), max(xs), max(ys)) if xs else None

    @property
    def variant(self):
        return self.geometries[0].variant if self.geometries else None


# ---------------------------------------------------------------------------
# TIFF
# ---------------------------------------------------------------------------

_TIFF_TYPE_SIZE = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}
_TIFF_TYPE_FMT = {1: "B", 3: "H", 4: "I", 6: "b", 8: "h", 9: "i", 11: "f", 12: "d"}

_TAG_WIDTH = 256
_TAG_HEIGHT = 257
_TAG_BITS = 258
_TAG_COMPRESSION = 259
_TAG_PHOTOMETRIC = 262
_TAG_STRIP_OFFSETS = 273
_TAG_SPP = 277
_TAG_ROWS_PER_STRIP = 278
_TAG_STRIP_COUNTS = 279
_TAG_PLANAR = 284
_TAG_PREDICTOR = 317
_TAG_TILE_WIDTH = 322
_TAG_SAMPLE_FORMAT = 339
_TAG_PIXEL_SCALE = 33550
_TAG_TIEPOINT = 33922
_TAG_GDAL_METADATA = 42112
_TAG_GDAL_NODATA = 42113

_DTYPES = {
    (1, 8): "u1", (1, 16): "u2", (1, 32): "u4", (1, 64): "u8",
    (2, 8): "i1", (2, 16): "i2", (2, 32): "i4", (2, 64): "i8",
    (3, 16): "f2", (3, 32): "f4", (3, 64): "f8",
}


def _read_ifd(data, end, offset):
    if offset + 2 > len(data):
        raise FormatError(f"IFD offset {offset} beyond end of file")
    (count,) = struct.unpack_from(end + "H", data, offset)
    if offset + 2 + 12 * count > len(data):
        raise FormatError("truncated IFD")
    tags = {}
    for i in range(count):
        base = offset + 2 + 12 * i
        tag, typ, n = struct.unpack_from(end + "HHI", data, base)
        size = _TIFF_TYPE_SIZE.get(typ)
        if size is None:
            continue
        total = size * n
        if total <= 4:
            raw = data[base + 8 : base + 8 + total]
        else:
            (voff,) = struct.unpack_from(end + "I", data, base + 8)
            if voff + total > len(data):
                raise FormatError(f"tag {tag} value at offset {voff} beyond end of file")
            raw = data[voff : voff + total]
        if typ in (2, 7):
            tags[tag] = raw
        elif typ in (5, 10):
            pairs = struct.unpack(end + ("Ii"[typ == 10] * 2 * n), raw)
            tags[tag] = [pairs[2 * k] / pairs[2 * k + 1] for k in range(n)]
        else:
            tags[tag] = list(struct.unpack(end + _TIFF_TYPE_FMT[typ] * n, raw))
    return tags


def _scalar(tags, tag, default=None):
    if tag not in tags:
        return default
    return tags[tag][0]


def read_geotiff(data: bytes) -> RasterDataset:
    """Parse a GeoTIFF byte string into a :class:`RasterDataset`."""
    if len(data) < 8:
        raise FormatError("file shorter than TIFF header")
    order = data[:2]
    if order == b"II":
        end = "<"
    elif order == b"MM":
        end = ">"
    else:
        raise FormatError(f"not a TIFF: byte-order mark {order!r}")
    magic, ifd_off = struct.unpack_from(end + "HI", data, 2)
    if magic != 42:
        raise FormatError(f"not a TIFF: magic {magic}")
    tags = _read_ifd(data, end, ifd_off)

    if _TAG_TILE_WIDTH in tags or 323 in tags:
        raise FormatError("tiled layout unsupported (tag 322 TileWidth)")
    compression = int(_scalar(tags, _TAG_COMPRESSION, 1))
    if compression not in (1, 8, 32946):
        raise FormatError(f"unsupported compression {compression} (tag 259)")
    spp = int(_scalar(tags, _TAG_SPP, 1))
    if spp != 1:
        raise FormatError(f"multi-band rasters unsupported (tag 277 SamplesPerPixel={spp})")
    if int(_scalar(tags, _TAG_PLANAR, 1)) != 1:
        raise FormatError("planar configuration unsupported (tag 284)")
    if int(_scalar(tags, _TAG_PREDICTOR, 1)) != 1:
        raise FormatError("predictor unsupported (tag 317)")

    width = _scalar(tags, _TAG_WIDTH)
    height = _scalar(tags, _TAG_HEIGHT)
    if width is None or height is None:
        raise FormatError("missing image size tags 256/257")
    width, height = int(width), int(height)

    bits = int(_scalar(tags, _TAG_BITS, 1))
    sample_format = int(_scalar(tags, _TAG_SAMPLE_FORMAT, 1))
    base = _DTYPES.get((sample_format, bits))
    if base is None:
        raise FormatError(
            f"unsupported sample type: {bits} bits (tag 258), format {sample_format} (tag 339)"
        )
    dtype = np.dtype(end + base)

    if _TAG_STRIP_OFFSETS not in tags or _TAG_STRIP_COUNTS not in tags:
        raise FormatError("missing strip layout tags 273/279")
    offsets = [int(v) for v in tags[_TAG_STRIP_OFFSETS]]
    counts = [int(v) for v in tags[_TAG_STRIP_COUNTS]]
    rows_per_strip = int(_scalar(tags, _TAG_ROWS_PER_STRIP, height) or height)
    n_strips = max(1, -(-height // rows_per_strip))
    if len(offsets) != n_strips or len(counts) != n_strips:
        raise FormatError("strip count disagrees with tags 273/278/279")

    rows = []
    for i, (off, cnt) in enumerate(zip(offsets, counts)):
        if off + cnt > len(data):
            raise FormatError(f"truncated strip {i} at offset {off}")
        raw = data[off : off + cnt]
        if compression in (8, 32946):
            try:
                raw = zlib.decompress(raw)
            except zlib.error as exc:
                raise FormatError(f"bad Deflate stream in strip {i} at offset {off}: {exc}")
        strip_rows = min(rows_per_strip, height - i * rows_per_strip)
        expected = strip_rows * width * dtype.itemsize
        if len(raw) != expected:
            raise FormatError(f"strip {i} at offset {off}: got {len(raw)} bytes, expected {expected}")
        rows.append(np.frombuffer(raw, dtype=dtype).reshape(strip_rows, width))
    values = np.vstack(rows).astype(np.float64) if rows else np.zeros((0, width))

    if _TAG_PIXEL_SCALE not in tags or _TAG_TIEPOINT not in tags:
        raise FormatError("missing georeferencing tags 33550/33922")
    sx, sy = tags[_TAG_PIXEL_SCALE][0], tags[_TAG_PIXEL_SCALE][1]
    tie = tags[_TAG_TIEPOINT]
    if len(tie) < 6:
        raise FormatError("tag 33922 needs at least one 6-value tiepoint")
    px_i, px_j, _, geo_x, geo_y = tie[0], tie[1], tie[2], tie[3], tie[4]
    transform = GeoTransform(geo_x - px_i * sx, geo_y + px_j * abs(sy), sx, abs(sy))

    nodata = None
    if _TAG_GDAL_NODATA in tags:
        text = tags[_TAG_GDAL_NODATA].rstrip(b"\x00").decode("ascii").strip()
        try:
            nodata = float(text)
        except ValueError:
            raise FormatError(f"unparseable GDAL_NODATA text {text!r} (tag 42113)")

    kind, crs_code = "continuous", ""
    if _TAG_GDAL_METADATA in tags:
        xml = tags[_TAG_GDAL_METADATA].rstrip(b"\x00").decode("ascii", "replace")
        m = re.search(r'<Item name="KIND">([^<]*)</Item>', xml)
        if m:
            kind = m.group(1)
        m = re.search(r'<Item name="CRS">([^<]*)</Item>', xml)
        if m:
            crs_code = m.group(1)

    return RasterDataset(width, height, transform, values, nodata, kind, crs_code)


def _format_nodata(value):
    if np.isnan(value):
        return "nan"
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_geotiff(raster: RasterDataset) -> bytes:
    """Serialize a raster as a little-endian, uncompressed float64 GeoTIFF.

    Strips hold at most 8 rows each. Output parses back bit-identically via
    :func:`read_geotiff` and opens in mainstream GIS tools.
    """
    h, w = raster.height, raster.width
    arr = np.ascontiguousarray(raster.values, dtype="<f8")
    rows_per_strip = 8
    n_strips = max(1, -(-h // rows_per_strip))

    strip_bytes = []
    for i in range(n_strips):
        strip_bytes.append(arr[i * rows_per_strip : (i + 1) * rows_per_strip].tobytes())
    data_start = 8
    offsets, pos = [], data_start
    for b in strip_bytes:
        offsets.append(pos)
        pos += len(b)
    ifd_off = pos

    t = raster.transform
    entries = [
        (_TAG_WIDTH, 4, [w]),
        (_TAG_HEIGHT, 4, [h]),
        (_TAG_BITS, 3, [64]),
        (_TAG_COMPRESSION, 3, [1]),
        (_TAG_PHOTOMETRIC, 3, [1]),
        (_TAG_STRIP_OFFSETS, 4, offsets),
        (_TAG_SPP, 3, [1]),
        (_TAG_ROWS_PER_STRIP, 4, [rows_per_strip]),
        (_TAG_STRIP_COUNTS, 4, [len(b) for b in strip_bytes]),
        (_TAG_SAMPLE_FORMAT, 3, [3]),
        (_TAG_PIXEL_SCALE, 12, [t.pixel_w, t.pixel_h, 0.0]),
        (_TAG_TIEPOINT, 12, [0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0]),
    ]
    items = ""
    if raster.kind != "continuous":
        items += f'<Item name="KIND">{raster.kind}</Item>'
    if raster.crs_code:
        items += f'<Item name="CRS">{raster.crs_code}</Item>'
    if items:
        xml = f"<GDALMetadata>{items}</GDALMetadata>\x00"
        entries.append((_TAG_GDAL_METADATA, 2, xml.encode("ascii")))
    if raster.nodata is not None:
        entries.append((_TAG_GDAL_NODATA, 2, (_format_nodata(raster.nodata) + "\x00").encode("ascii")))
    entries.sort(key=lambda e: e[0])

    # IFD entries first, overflow values appended after the IFD terminator.
    extra_off = ifd_off + 2 + 12 * len(entries) + 4
    ifd = struct.pack("<H", len(entries))
    extra = b""
    for tag, typ, values in entries:
        if typ == 2:
            payload = bytes(values)
            count = len(payload)
        else:
            fmt = "<" + _TIFF_TYPE_FMT[typ] * len(values)
            payload = struct.pack(fmt, *values)
            count = len(values)
        if len(payload) <= 4:
            inline = payload.ljust(4, b"\x00")
        else:
            inline = struct.pack("<I", extra_off + len(extra))
            extra += payload
        ifd += struct.pack("<HHI", tag, typ, count) + inline
    ifd += struct.pack("<I", 0)

    header = b"II" + struct.pack("<HI", 42, ifd_off)
    return header + b"".join(strip_bytes) + ifd + extra


# ---------------------------------------------------------------------------
# Shapefile
# ---------------------------------------------------------------------------

SHP_NULL = 0
SHP_POINT = 1
SHP_POLYLINE = 3
SHP_POLYGON = 5

_SHP_VARIANTS = {SHP_POINT: "point", SHP_POLYLINE: "polyline", SHP_POLYGON: "polygon"}


def read_shapefile(data: bytes) -> VectorDataset:
    """Parse a .shp main file into a :class:`VectorDataset`.

    Multi-part polylines come back flattened, one geometry per part; polygon
    rings stay grouped with the outer ring first as stored.
    """
    if len(data) < 100:
        raise FormatError("file shorter than shapefile header")
    (code,) = struct.unpack_from(">i", data, 0)
    if code != 9994:
        raise FormatError(f"bad shapefile file code {code}")
    (declared_words,) = struct.unpack_from(">i", data, 24)
    if declared_words * 2 != len(data):
        raise FormatError(
            f"declared file length {declared_words * 2} bytes != actual {len(data)}"
        )
    file_type = struct.unpack_from("<i", data, 32)[0]
    if file_type not in _SHP_VARIANTS:
        raise FormatError(f"unsupported shape type {file_type}")

    geometries = []
    off, index = 100, 0
    while off < len(data):
        index += 1
        if off + 8 > len(data):
            raise FormatError(f"record {index}: truncated record header")
        _, content_words = struct.unpack_from(">ii", data, off)
        content = data[off + 8 : off + 8 + content_words * 2]
        if len(content) != content_words * 2:
            raise FormatError(f"record {index}: content truncated")
        (shp_type,) = struct.unpack_from("<i", content, 0)
        if shp_type != SHP_NULL:
            if shp_type != file_type:
                raise FormatError(
                    f"record {index}: shape type {shp_type} mixed with file type {file_type}"
                )
            geometries.extend(_parse_record(shp_type, content, index))
        off += 8 + content_words * 2

    return VectorDataset(geometries)


def _parse_record(shp_type, content, index):
    if shp_type == SHP_POINT:
        if len(content) != 20:
            raise FormatError(f"record {index}: point record length {len(content)} != 20")
        x, y = struct.unpack_from("<dd", content, 4)
        return [Geometry("point", [[(x, y)]])]

    # PolyLine / Polygon share the wire layout.
    if len(content) < 44:
        raise FormatError(f"record {index}: record too short for shape type {shp_type}")
    n_parts, n_points = struct.unpack_from("<ii", content, 36)
    expected = 44 + 4 * n_parts + 16 * n_points
    if len(content) != expected:
        raise FormatError(
            f"record {index}: record length {len(content)} inconsistent, expected {expected}"
        )
    parts = struct.unpack_from(f"<{n_parts}i", content, 44)
    flat = struct.unpack_from(f"<{2 * n_points}d", content, 44 + 4 * n_parts)
    points = [(flat[2 * i], flat[2 * i + 1]) for i in range(n_points)]
    bounds = list(parts) + [n_points]
    sequences = [points[bounds[i] : bounds[i + 1]] for i in range(n_parts)]

    if shp_type == SHP_POLYLINE:
        return [Geometry("polyline", [part]) for part in sequences]
    return [Geometry("polygon", sequences)]


def write_shapefile(dataset: VectorDataset) -> bytes:
    """Serialize geometries as a .shp main file (inverse of :func:`read_shapefile`)."""
    if not dataset.geometries:
        raise ValueError("cannot write an empty shapefile")
    variant = dataset.variant
    shp_type = {v: k for k, v in _SHP_VARIANTS.items()}[variant]

    records = b""
    for number, geom in enumerate(dataset.geometries, start=1):
        if variant == "point":
            (x, y), = geom.coordinates[0]
            content = struct.pack("<idd", SHP_POINT, x, y)
        else:
            parts = geom.coordinates
            points = [pt for part in parts for pt in part]
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            content = struct.pack(
                "<i4dii", shp_type, min(xs), min(ys), max(xs), max(ys), len(parts), len(points)
            )
            start = 0
            for part in parts:
                content += struct.pack("<i", start)
                start += len(part)
            for x, y in points:
                content += struct.pack("<dd", x, y)
        records += struct.pack(">ii", number, len(content) // 2) + content

    min_x, min_y, max_x, max_y = dataset.bbox
    header = struct.pack(">i5i", 9994, 0, 0, 0, 0, 0)
    header += struct.pack(">i", (100 + len(records)) // 2)
    header += struct.pack("<ii", 1000, shp_type)
    header += struct.pack("<4d", min_x, min_y, max_x, max_y)
    header += struct.pack("<4d", 0.0, 0.0, 0.0, 0.0)
    return header + records
