import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poachgrid.geoformats import (
    FormatError,
    GeoTransform,
    Geometry,
    RasterDataset,
    VectorDataset,
    read_geotiff,
    read_shapefile,
    write_geotiff,
    write_shapefile,
)

TIFF_FIXTURES = [
    "rect_3x2_f32_le.tif",
    "rect_3x2_f32_be.tif",
    "rect_3x2_f32_deflate.tif",
    "rect_2x2_i16_nodata.tif",
    "rect_3x1_u8.tif",
]


def rasters_equal(a, b):
    if (a.width, a.height, a.transform, a.kind, a.crs_code) != (
        b.width,
        b.height,
        b.transform,
        b.kind,
        b.crs_code,
    ):
        return False
    if (a.nodata is None) != (b.nodata is None):
        return False
    if a.nodata is not None and not (
        a.nodata == b.nodata or (np.isnan(a.nodata) and np.isnan(b.nodata))
    ):
        return False
    return a.values.tobytes() == b.values.tobytes()


# --- GeoTIFF reading ------------------------------------------------------


@pytest.mark.parametrize("name", TIFF_FIXTURES)
def test_reference_tool_fixtures_parse(format_fixtures, name):
    expected = json.loads((format_fixtures / "expected_tiff.json").read_text())
    raster = read_geotiff((format_fixtures / name).read_bytes())
    want = expected[name]
    t = expected["transform"]
    assert raster.width == want["width"]
    assert raster.height == want["height"]
    assert raster.transform == GeoTransform(
        t["origin_x"], t["origin_y"], t["pixel_w"], t["pixel_h"]
    )
    assert raster.values.tolist() == want["values"]
    assert raster.nodata == want.get("nodata")


def test_endianness_transparent(format_fixtures):
    le = read_geotiff((format_fixtures / "rect_3x2_f32_le.tif").read_bytes())
    be = read_geotiff((format_fixtures / "rect_3x2_f32_be.tif").read_bytes())
    assert le.values.tobytes() == be.values.tobytes()
    assert le.transform == be.transform


def test_bad_magic_rejected():
    with pytest.raises(FormatError, match="byte-order"):
        read_geotiff(b"PK\x03\x04" + b"\x00" * 64)


def test_missing_georeferencing_rejected():
    tifffile = pytest.importorskip("tifffile")
    import io

    buf = io.BytesIO()
    tifffile.imwrite(buf, np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(FormatError, match="33550|33922"):
        read_geotiff(buf.getvalue())


def _minimal_tiff(compression=1, strip_offset=None, tag_extra=()):
    """Hand-built 1x1 uint8 TIFF for violation tests."""
    entries = [
        (256, 3, 1, 1),
        (257, 3, 1, 1),
        (258, 3, 1, 8),
        (259, 3, 1, compression),
        (273, 4, 1, strip_offset if strip_offset is not None else 8),
        (279, 4, 1, 1),
    ]
    entries += list(tag_extra)
    entries.sort()
    ifd_off = 10
    out = b"II" + struct.pack("<HI", 42, ifd_off) + b"\x07\x00"
    out += struct.pack("<H", len(entries))
    for tag, typ, count, value in entries:
        out += struct.pack("<HHI", tag, typ, count) + struct.pack("<I", value)
    out += struct.pack("<I", 0)
    return out


def test_unsupported_compression_names_tag():
    with pytest.raises(FormatError, match="compression 5.*tag 259"):
        read_geotiff(_minimal_tiff(compression=5))


def test_tiled_layout_names_tag():
    with pytest.raises(FormatError, match="tag 322"):
        read_geotiff(_minimal_tiff(tag_extra=[(322, 4, 1, 16)]))


def test_truncated_strip_reports_offset():
    with pytest.raises(FormatError, match="strip 0 at offset 99999"):
        read_geotiff(_minimal_tiff(strip_offset=99999, tag_extra=[(33550, 12, 3, 8), (33922, 12, 6, 8)]))


# --- GeoTIFF writing ------------------------------------------------------


def test_roundtrip_simple_raster():
    raster = RasterDataset(
        1, 1, GeoTransform(0.0, 1000.0, 1000.0, 1000.0), np.array([[7.0]])
    )
    again = read_geotiff(write_geotiff(raster))
    assert rasters_equal(raster, again)


def test_nodata_tag_is_ascii_text():
    raster = RasterDataset(
        1, 1, GeoTransform(0.0, 1000.0, 1000.0, 1000.0), np.array([[7.0]]), nodata=-9999
    )
    assert b"-9999\x00" in write_geotiff(raster)


def test_emitted_file_opens_in_reference_tool(tmp_path):
    tifffile = pytest.importorskip("tifffile")
    raster = RasterDataset(
        4,
        3,
        GeoTransform(4000.0, 9000.0, 500.0, 500.0),
        np.arange(12, dtype=float).reshape(3, 4),
        nodata=-1.0,
    )
    path = tmp_path / "emitted.tif"
    path.write_bytes(write_geotiff(raster))
    with tifffile.TiffFile(path) as tif:
        page = tif.pages[0]
        assert page.tags[33550].value[:2] == (500.0, 500.0)
        assert page.tags[33922].value[3:5] == (4000.0, 9000.0)
        assert page.tags[42113].value == "-1"
        np.testing.assert_array_equal(page.asarray(), raster.values)


@st.composite
def raster_datasets(draw):
    width = draw(st.integers(1, 12))
    height = draw(st.integers(1, 20))
    kind = draw(st.sampled_from(["continuous", "categorical"]))
    if kind == "categorical":
        values = draw(
            st.lists(
                st.integers(-50, 50).map(float),
                min_size=width * height,
                max_size=width * height,
            )
        )
    else:
        values = draw(
            st.lists(
                st.floats(allow_nan=True, allow_infinity=True, width=64),
                min_size=width * height,
                max_size=width * height,
            )
        )
    array = np.array(values, dtype=np.float64).reshape(height, width)
    nodata = draw(st.sampled_from([None, float("nan"), -9999.0, 0.5]))
    if kind == "categorical" and nodata == 0.5:
        nodata = None
    transform = GeoTransform(
        draw(st.floats(-1e6, 1e6)),
        draw(st.floats(-1e6, 1e6)),
        draw(st.floats(0.1, 5000.0)),
        draw(st.floats(0.1, 5000.0)),
    )
    crs = draw(st.sampled_from(["", "EPSG:32636", "EPSG:32632"]))
    return RasterDataset(width, height, transform, array, nodata, kind, crs)


@settings(max_examples=60, deadline=None)
@given(raster_datasets())
def test_roundtrip_property(raster):
    assert rasters_equal(raster, read_geotiff(write_geotiff(raster)))


# --- Shapefile ------------------------------------------------------------


def test_single_point_fixture(format_fixtures):
    vd = read_shapefile((format_fixtures / "single_point.shp").read_bytes())
    assert len(vd.geometries) == 1
    assert vd.geometries[0].variant == "point"
    assert vd.geometries[0].coordinates == [[(3000.0, 4000.0)]]


def test_multipart_polylines_flattened(format_fixtures):
    vd = read_shapefile((format_fixtures / "two_polylines.shp").read_bytes())
    assert [len(g.coordinates[0]) for g in vd.geometries] == [2, 3, 2]
    assert vd.geometries[2].coordinates[0][0] == (8000.0, 8000.0)


def test_polygon_rings_preserved(format_fixtures):
    vd = read_shapefile((format_fixtures / "square_with_hole.shp").read_bytes())
    (poly,) = vd.geometries
    assert poly.variant == "polygon"
    assert len(poly.coordinates) == 2
    assert poly.coordinates[0][0] == (0.0, 0.0)
    assert poly.coordinates[1][0] == (3000.0, 3000.0)


def test_null_only_file_is_empty(format_fixtures):
    vd = read_shapefile((format_fixtures / "null_only.shp").read_bytes())
    assert vd.geometries == []
    assert vd.bbox is None


def test_bad_file_code_rejected(format_fixtures):
    data = bytearray((format_fixtures / "single_point.shp").read_bytes())
    struct.pack_into(">i", data, 0, 1234)
    with pytest.raises(FormatError, match="file code"):
        read_shapefile(bytes(data))


def test_declared_length_mismatch_rejected(format_fixtures):
    data = (format_fixtures / "single_point.shp").read_bytes()
    with pytest.raises(FormatError, match="declared file length"):
        read_shapefile(data + b"\x00\x00")


def test_mixed_shape_types_rejected(format_fixtures):
    # Point record spliced into a polyline file.
    lines = (format_fixtures / "two_polylines.shp").read_bytes()
    point = struct.pack("<idd", 1, 0.0, 0.0)
    record = struct.pack(">ii", 99, len(point) // 2) + point
    data = bytearray(lines + record)
    struct.pack_into(">i", data, 24, len(data) // 2)
    with pytest.raises(FormatError, match="record 3.*mixed"):
        read_shapefile(bytes(data))


def test_record_length_inconsistency_names_record(format_fixtures):
    data = bytearray((format_fixtures / "single_point.shp").read_bytes())
    struct.pack_into(">i", data, 104, 9)  # shrink record 1's declared length
    struct.pack_into(">i", data, 24, (len(data) - 2) // 2)
    with pytest.raises(FormatError, match="record 1"):
        read_shapefile(bytes(data[:-2]))


def test_vertex_bbox_within_header_bbox(format_fixtures):
    for name in ["single_point.shp", "two_polylines.shp", "square_with_hole.shp"]:
        data = (format_fixtures / name).read_bytes()
        header_bbox = struct.unpack_from("<4d", data, 36)
        vd = read_shapefile(data)
        assert vd.bbox[0] >= header_bbox[0] - 1e-6
        assert vd.bbox[1] >= header_bbox[1] - 1e-6
        assert vd.bbox[2] <= header_bbox[2] + 1e-6
        assert vd.bbox[3] <= header_bbox[3] + 1e-6


coordinate = st.floats(-1e6, 1e6).map(lambda v: round(v, 3))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(coordinate, coordinate), min_size=1, max_size=8),
)
def test_point_shapefile_roundtrip(points):
    vd = VectorDataset([Geometry("point", [[p]]) for p in points])
    again = read_shapefile(write_shapefile(vd))
    assert [g.coordinates for g in again.geometries] == [g.coordinates for g in vd.geometries]
    assert again.bbox == vd.bbox


def test_polygon_shapefile_roundtrip():
    ring = [(0.0, 0.0), (0.0, 5000.0), (2500.0, 6000.0), (5000.0, 0.0), (0.0, 0.0)]
    vd = VectorDataset([Geometry("polygon", [ring])])
    again = read_shapefile(write_shapefile(vd))
    assert again.geometries[0].coordinates == vd.geometries[0].coordinates
