#!/usr/bin/env python3
"""One-time generator for the checked-in format fixtures under fixtures/formats/.

TIFF fixtures are produced with tifffile (the reference implementation used
to define the ingestion contract); shapefile fixtures are assembled directly
from the published ESRI byte layout. This script deliberately does not import
poachgrid, so the fixtures stay independent of the code they test.

Run from the repo root: python3 scripts/make_format_fixtures.py
"""

import json
import struct
from pathlib import Path

import numpy as np
import tifffile

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "formats"

GEO = {
    # pixel (0,0) top-left corner at (100000, 200000), 10 m pixels
    "scale": (10.0, 10.0, 0.0),
    "tiepoint": (0.0, 0.0, 0.0, 100000.0, 200000.0, 0.0),
}


def geo_tags(nodata=None):
    tags = [
        (33550, "d", 3, GEO["scale"], True),
        (33922, "d", 6, GEO["tiepoint"], True),
    ]
    if nodata is not None:
        tags.append((42113, "s", 0, nodata, True))
    return tags


def write_tiffs():
    values = np.arange(1, 7, dtype=np.float32).reshape(2, 3)

    tifffile.imwrite(OUT / "rect_3x2_f32_le.tif", values,
                     photometric="minisblack", extratags=geo_tags())
    tifffile.imwrite(OUT / "rect_3x2_f32_be.tif", values, byteorder=">",
                     photometric="minisblack", extratags=geo_tags())
    tifffile.imwrite(OUT / "rect_3x2_f32_deflate.tif", values, compression="zlib",
                     photometric="minisblack", extratags=geo_tags())

    ints = np.array([[0, -5], [32000, -9999]], dtype=np.int16)
    tifffile.imwrite(OUT / "rect_2x2_i16_nodata.tif", ints,
                     photometric="minisblack", extratags=geo_tags(nodata="-9999"))

    bytes_ = np.array([[0, 255, 7]], dtype=np.uint8)
    tifffile.imwrite(OUT / "rect_3x1_u8.tif", bytes_,
                     photometric="minisblack", extratags=geo_tags())

    expected = {
        "transform": {"origin_x": 100000.0, "origin_y": 200000.0, "pixel_w": 10.0, "pixel_h": 10.0},
        "rect_3x2_f32_le.tif": {"width": 3, "height": 2, "values": values.tolist()},
        "rect_3x2_f32_be.tif": {"width": 3, "height": 2, "values": values.tolist()},
        "rect_3x2_f32_deflate.tif": {"width": 3, "height": 2, "values": values.tolist()},
        "rect_2x2_i16_nodata.tif": {"width": 2, "height": 2, "values": ints.tolist(), "nodata": -9999.0},
        "rect_3x1_u8.tif": {"width": 3, "height": 1, "values": bytes_.tolist()},
    }
    (OUT / "expected_tiff.json").write_text(json.dumps(expected, indent=2, sort_keys=True))


def shp_bytes(shape_type, record_contents, bbox):
    records = b""
    for number, content in enumerate(record_contents, start=1):
        records += struct.pack(">ii", number, len(content) // 2) + content
    header = struct.pack(">i5i", 9994, 0, 0, 0, 0, 0)
    header += struct.pack(">i", (100 + len(records)) // 2)
    header += struct.pack("<ii", 1000, shape_type)
    header += struct.pack("<4d", *bbox)
    header += struct.pack("<4d", 0.0, 0.0, 0.0, 0.0)
    return header + records


def poly_content(shape_type, parts):
    points = [pt for part in parts for pt in part]
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    content = struct.pack("<i4dii", shape_type, min(xs), min(ys), max(xs), max(ys),
                          len(parts), len(points))
    start = 0
    for part in parts:
        content += struct.pack("<i", start)
        start += len(part)
    for x, y in points:
        content += struct.pack("<dd", x, y)
    return content


def write_shapefiles():
    point = struct.pack("<idd", 1, 3000.0, 4000.0)
    (OUT / "single_point.shp").write_bytes(shp_bytes(1, [point], (3000, 4000, 3000, 4000)))

    # One single-part line, one two-part line: readers must flatten to 3 parts.
    line_a = poly_content(3, [[(0.0, 0.0), (10000.0, 0.0)]])
    line_b = poly_content(3, [
        [(0.0, 1000.0), (5000.0, 1000.0), (5000.0, 3000.0)],
        [(8000.0, 8000.0), (9000.0, 9000.0)],
    ])
    (OUT / "two_polylines.shp").write_bytes(shp_bytes(3, [line_a, line_b], (0, 0, 10000, 9000)))

    outer = [(0.0, 0.0), (0.0, 10000.0), (10000.0, 10000.0), (10000.0, 0.0), (0.0, 0.0)]
    hole = [(3000.0, 3000.0), (7000.0, 3000.0), (7000.0, 7000.0), (3000.0, 7000.0), (3000.0, 3000.0)]
    poly = poly_content(5, [outer, hole])
    (OUT / "square_with_hole.shp").write_bytes(shp_bytes(5, [poly], (0, 0, 10000, 10000)))

    null_record = struct.pack("<i", 0)
    (OUT / "null_only.shp").write_bytes(shp_bytes(1, [null_record], (0, 0, 0, 0)))


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write_tiffs()
    write_shapefiles()
    print(f"fixtures written to {OUT}")
