import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layercodec.errors import AnnotationError, ImageFormatError
from layercodec.imagery import (CategoryDictionary, RgbImage, crop_to_original,
                                decode_pgm16, decode_ppm, encode_pgm16,
                                encode_ppm, ingest_annotations, load_image,
                                mask_bbox, pad_to_multiple, parse_annotations,
                                rasterize_polygon, round_half_up, save_image)


def write_ppm(path, width, height, payload: bytes):
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode() + payload)


class TestPpmIo:
    def test_smallest_valid_file(self, tmp_path):
        p = tmp_path / "one.ppm"
        write_ppm(p, 1, 1, bytes([0, 0, 0]))
        img = load_image(p)
        assert (img.width, img.height) == (1, 1)
        assert img.samples.tolist() == [[[0, 0, 0]]]

    def test_round_trip_is_byte_identical(self, tmp_path):
        payload = bytes(range(12))
        src = tmp_path / "src.ppm"
        write_ppm(src, 2, 2, payload)
        img = load_image(src)
        dst = tmp_path / "dst.ppm"
        save_image(img, dst)
        assert dst.read_bytes() == src.read_bytes()

    def test_gradient_payload_bytes_land_in_samples(self, tmp_path):
        # 2x2 written by hand: pixel (y,x) channel c = 40*y + 20*x + c
        payload = bytes([0, 1, 2, 20, 21, 22, 40, 41, 42, 60, 61, 62])
        p = tmp_path / "grad.ppm"
        write_ppm(p, 2, 2, payload)
        img = load_image(p)
        assert img.samples[0, 1].tolist() == [20, 21, 22]
        assert img.samples[1, 0].tolist() == [40, 41, 42]
        assert img.samples.tobytes() == payload

    def test_header_comments_and_whitespace(self):
        data = b"P6 # comment\n# another\n 2\t1 \n255\n" + bytes(6)
        img = decode_ppm(data)
        assert (img.width, img.height) == (2, 1)

    @pytest.mark.parametrize("data", [
        b"P5\n1 1\n255\n\x00",                      # wrong magic
        b"P6\n1 1\n254\n\x00\x00\x00",              # wrong maxval
        b"P6\n2 2\n255\n\x00\x00\x00",              # truncated payload
        b"P6\nx 1\n255\n\x00\x00\x00",              # non-numeric field
        b"P6\n1 1\n255",                            # missing payload separator
    ])
    def test_malformed_files_rejected(self, data):
        with pytest.raises(ImageFormatError):
            decode_ppm(data)

    def test_pgm16_round_trip_big_endian(self):
        values = np.array([[0, 1], [5889, 65535]], dtype=np.uint16)
        blob = encode_pgm16(values)
        assert blob.startswith(b"P5\n2 2\n65535\n")
        # big-endian sample bytes
        assert blob[-8:] == bytes([0, 0, 0, 1, 0x17, 0x01, 0xFF, 0xFF])
        assert np.array_equal(decode_pgm16(blob), values)


class TestPadding:
    def test_already_multiple_is_unchanged(self):
        img = RgbImage.from_array(np.zeros((64, 64, 3), dtype=np.uint8))
        padded, size = pad_to_multiple(img, 8)
        assert padded is img
        assert size == (64, 64)

    def test_ceiling_arithmetic(self):
        img = RgbImage.from_array(np.zeros((70, 65, 3), dtype=np.uint8))
        padded, size = pad_to_multiple(img, 8)
        assert (padded.width, padded.height) == (72, 72)
        assert size == (65, 70)

    def test_replicated_border_equals_nearest_edge_pixel(self):
        # 3x3 pattern, hand-enumerated
        base = np.arange(27, dtype=np.uint8).reshape(3, 3, 3)
        img = RgbImage.from_array(base)
        padded, _ = pad_to_multiple(img, 4)
        assert (padded.width, padded.height) == (4, 4)
        assert padded.samples[3, 0].tolist() == base[2, 0].tolist()
        assert padded.samples[0, 3].tolist() == base[0, 2].tolist()
        assert padded.samples[3, 3].tolist() == base[2, 2].tolist()

    @given(w=st.integers(1, 40), h=st.integers(1, 40), m=st.integers(1, 16))
    @settings(max_examples=60, deadline=None)
    def test_pad_then_crop_is_identity(self, w, h, m):
        rng = np.random.default_rng(w * 1000 + h * 16 + m)
        img = RgbImage.from_array(rng.integers(0, 256, (h, w, 3)).astype(np.uint8))
        padded, size = pad_to_multiple(img, m)
        assert padded.width % m == 0 and padded.height % m == 0
        assert padded.width - img.width < m and padded.height - img.height < m
        restored = crop_to_original(padded.samples, size)
        assert np.array_equal(restored, img.samples)


class TestDictionary:
    def test_load_save_round_trip(self, tmp_path):
        d = CategoryDictionary(entries={24: "cat", 45: "dog"})
        path = tmp_path / "dict.tsv"
        d.save(path)
        assert path.read_text() == "24\tcat\n45\tdog\n"
        assert CategoryDictionary.load(path).entries == d.entries

    def test_duplicate_id_rejected(self):
        with pytest.raises(AnnotationError):
            CategoryDictionary.parse("1\ta\n1\tb\n")

    def test_out_of_range_id_rejected(self):
        with pytest.raises(ValueError):
            CategoryDictionary(entries={0: "zero"})
        with pytest.raises(ValueError):
            CategoryDictionary(entries={257: "big"})


def brute_force_rasterize(vertices, width, height):
    """Per-pixel scalar even-odd crossing test, same ray convention as the
    vectorized rasterizer but written independently of numpy broadcasting."""
    verts = [(float(x), float(y)) for x, y in vertices]
    mask = np.zeros((height, width), dtype=bool)
    n = len(verts)
    for yi in range(height):
        for xi in range(width):
            px, py = xi + 0.5, yi + 0.5
            inside = False
            for i in range(n):
                x0, y0 = verts[i]
                x1, y1 = verts[(i + 1) % n]
                if y0 == y1:
                    continue
                if min(y0, y1) <= py < max(y0, y1):
                    x_at = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
                    if x_at > px:
                        inside = not inside
            mask[yi, xi] = inside
    return mask


class TestRasterization:
    def test_rounding_half_goes_up(self):
        assert round_half_up(np.array([10.6, 10.5, 10.4, -0.5])).tolist() == \
            [11, 11, 10, 0]

    def test_full_frame_polygon_covers_everything(self):
        mask = rasterize_polygon(np.array([[0, 0], [6, 0], [6, 6], [0, 6]]), 6, 6)
        assert mask.all()

    def test_matches_brute_force_on_random_polygons(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            nv = int(rng.integers(3, 8))
            verts = rng.integers(0, 13, size=(nv, 2))
            got = rasterize_polygon(verts, 12, 12)
            want = brute_force_rasterize(verts, 12, 12)
            assert np.array_equal(got, want)

    def test_matches_shapely_on_clear_pixels(self):
        shapely = pytest.importorskip("shapely")
        from shapely.geometry import Point, Polygon
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(10):
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=6))
            verts = np.stack([8 + 6 * np.cos(angles), 8 + 6 * np.sin(angles)],
                             axis=1)
            verts = round_half_up(verts)
            poly = Polygon([tuple(v) for v in verts])
            if not poly.is_valid or poly.area == 0:
                continue
            mask = rasterize_polygon(verts, 16, 16)
            for yi in range(16):
                for xi in range(16):
                    center = Point(xi + 0.5, yi + 0.5)
                    if poly.exterior.distance(center) < 1e-9:
                        continue  # on the boundary: convention differences allowed
                    assert mask[yi, xi] == poly.contains(center)
                    checked += 1
        assert checked > 500


class TestIngestAnnotations:
    def test_single_full_frame_polygon(self, tmp_path, dictionary):
        path = tmp_path / "a.jsonl"
        path.write_text(json.dumps(
            {"category_id": 2, "polygon": [[0, 0], [8, 0], [8, 8], [0, 8]]}) + "\n")
        imap = ingest_annotations(path, dictionary, 8, 8)
        assert len(imap.instances) == 1
        rec = imap.instances[0]
        assert (rec.category_id, rec.instance_index) == (2, 1)
        assert rec.mask.all()

    def test_two_cats_one_dog_indexing(self):
        # categories 24 (cat) and 45 (dog); indices assigned per category
        dic = CategoryDictionary(entries={24: "cat", 45: "dog"})
        lines = [
            {"category_id": 24, "polygon": [[0, 0], [4, 0], [4, 4], [0, 4]]},
            {"category_id": 24, "polygon": [[4, 4], [8, 4], [8, 8], [4, 8]]},
            {"category_id": 45, "polygon": [[0, 4], [4, 4], [4, 8], [0, 8]]},
        ]
        imap = parse_annotations("\n".join(json.dumps(x) for x in lines), dic, 8, 8)
        assert [(r.category_id, r.instance_index) for r in imap.instances] == \
            [(24, 1), (24, 2), (45, 1)]

    def test_fractional_vertex_rounds_then_rasterizes(self):
        dic = CategoryDictionary(entries={1: "x"})
        obj = {"category_id": 1,
               "polygon": [[1.4, 1.4], [10.6, 1.4], [10.6, 10.6], [1.4, 10.6]]}
        imap = parse_annotations(json.dumps(obj), dic, 16, 16)
        rec = imap.instances[0]
        rounded = np.array([[1, 1], [11, 1], [11, 11], [1, 11]])
        want = brute_force_rasterize(rounded, 16, 16)
        assert np.array_equal(rec.mask, want)
        assert rec.bbox == mask_bbox(want)

    def test_unknown_category_rejected(self, dictionary):
        obj = {"category_id": 200, "polygon": [[0, 0], [4, 0], [4, 4]]}
        with pytest.raises(AnnotationError):
            parse_annotations(json.dumps(obj), dictionary, 8, 8)

    def test_degenerate_polygon_rejected(self, dictionary):
        obj = {"category_id": 1, "polygon": [[0, 0], [4, 0]]}
        with pytest.raises(AnnotationError):
            parse_annotations(json.dumps(obj), dictionary, 8, 8)

    def test_instance_overflow_rejected(self):
        dic = CategoryDictionary(entries={1: "x"})
        line = json.dumps({"category_id": 1,
                           "polygon": [[0, 0], [30, 0], [30, 30], [0, 30]]})
        text = "\n".join([line] * 256)
        with pytest.raises(AnnotationError, match="more than 255"):
            parse_annotations(text, dic, 32, 32)

    def test_paint_order_is_descending_area(self, dictionary):
        lines = [
            {"category_id": 1, "polygon": [[0, 0], [4, 0], [4, 4], [0, 4]]},
            {"category_id": 2, "polygon": [[0, 0], [12, 0], [12, 12], [0, 12]]},
        ]
        imap = parse_annotations("\n".join(json.dumps(x) for x in lines),
                                 dictionary, 16, 16)
        assert list(imap.paint_order) == [1, 0]  # big box first, small last

    def test_deterministic(self, dictionary):
        lines = "\n".join(json.dumps(
            {"category_id": 3, "polygon": [[i, 0], [i + 5.2, 0], [i + 3, 7.7]]})
            for i in range(4))
        a = parse_annotations(lines, dictionary, 16, 16)
        b = parse_annotations(lines, dictionary, 16, 16)
        assert len(a.instances) == len(b.instances)
        for ra, rb in zip(a.instances, b.instances):
            assert np.array_equal(ra.mask, rb.mask)
            assert ra.bbox == rb.bbox
