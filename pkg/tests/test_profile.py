import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layercodec.errors import CorruptProfileError, ProfileError
from layercodec.imagery import InstanceMap, InstanceRecord, mask_bbox
from layercodec.profile import (GrayProfile, decode_tasks, encode_profile,
                                mask_to_rle, pack_value, profile_to_channel,
                                rle_to_mask, unpack_value)


def make_record(cid, idx, mask):
    return InstanceRecord(category_id=cid, instance_index=idx,
                          mask=mask, bbox=mask_bbox(mask))


def rect_mask(h, w, y0, x0, y1, x1):
    mask = np.zeros((h, w), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


class TestPacking:
    def test_paper_worked_values(self):
        assert pack_value(24, 1) == 5889
        assert pack_value(24, 2) == 5890
        assert pack_value(45, 1) == 11265

    def test_first_category_first_instance(self):
        assert pack_value(1, 1) == 1

    def test_unpack_worked_value(self):
        assert unpack_value(5890) == (24, 2)
        assert unpack_value(1) == (1, 1)

    def test_exhaustive_bijection(self):
        # all 65 280 valid pairs, vectorized to stay well under a second
        c = np.arange(1, 257)
        n = np.arange(1, 256)
        v = 256 * (c[:, None] - 1) + n[None, :]
        c_back = v // 256 + 1
        n_back = v - 256 * (c_back - 1)
        assert np.array_equal(np.broadcast_to(c[:, None], v.shape), c_back)
        assert np.array_equal(np.broadcast_to(n[None, :], v.shape), n_back)
        assert len(np.unique(v)) == 256 * 255
        # spot-check the scalar path against the vectorized sweep
        for cid, idx in [(1, 1), (1, 255), (256, 1), (256, 255), (24, 2)]:
            assert unpack_value(pack_value(cid, idx)) == (cid, idx)

    @pytest.mark.parametrize("c,n", [(0, 1), (257, 1), (1, 0), (1, 256)])
    def test_out_of_range_rejected(self, c, n):
        with pytest.raises(ProfileError):
            pack_value(c, n)

    @pytest.mark.parametrize("v", [0, 256, 512, 65280])
    def test_unpackable_values_rejected(self, v):
        with pytest.raises(ProfileError):
            unpack_value(v)


class TestEncodeProfile:
    def test_empty_map_is_all_zero(self):
        imap = InstanceMap(width=5, height=4, instances=())
        profile = encode_profile(imap)
        assert profile.values.shape == (4, 5)
        assert not profile.values.any()

    def test_two_cats_one_dog_value_set(self):
        cat1 = make_record(24, 1, rect_mask(8, 8, 0, 0, 4, 3))
        cat2 = make_record(24, 2, rect_mask(8, 8, 0, 4, 4, 8))
        dog1 = make_record(45, 1, rect_mask(8, 8, 5, 0, 8, 8))
        imap = InstanceMap(width=8, height=8, instances=(cat1, cat2, dog1))
        profile = encode_profile(imap)
        assert set(int(v) for v in np.unique(profile.values)) == \
            {0, 5889, 5890, 11265}

    def test_overlap_keeps_last_painted_small_instance(self):
        big = make_record(1, 1, rect_mask(8, 8, 0, 0, 8, 8))
        small = make_record(2, 1, rect_mask(8, 8, 2, 2, 5, 5))
        imap = InstanceMap(width=8, height=8, instances=(big, small))
        profile = encode_profile(imap)
        # brute-force paint simulation in paint order
        want = np.zeros((8, 8), dtype=np.uint16)
        for idx in imap.paint_order:
            rec = imap.instances[idx]
            for y in range(8):
                for x in range(8):
                    if rec.mask[y, x]:
                        want[y, x] = pack_value(rec.category_id,
                                                rec.instance_index)
        assert np.array_equal(profile.values, want)
        assert profile.values[3, 3] == pack_value(2, 1)


class TestDecodeTasks:
    def test_all_zero_profile_decodes_empty(self):
        profile = GrayProfile.from_array(np.zeros((4, 4), dtype=np.uint16))
        assert decode_tasks(profile) == []

    def test_worked_example_categories(self):
        cat1 = make_record(24, 1, rect_mask(8, 8, 0, 0, 4, 4))
        cat2 = make_record(24, 2, rect_mask(8, 8, 0, 4, 4, 8))
        dog1 = make_record(45, 1, rect_mask(8, 8, 4, 0, 8, 8))
        imap = InstanceMap(width=8, height=8, instances=(cat1, cat2, dog1))
        tasks = decode_tasks(encode_profile(imap))
        assert sorted((t.category_id, t.instance_index) for t in tasks) == \
            [(24, 1), (24, 2), (45, 1)]

    def test_round_trip_masks_equal_visible_masks(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            records = []
            counts = {}
            for _ in range(int(rng.integers(1, 6))):
                cid = int(rng.integers(1, 5))
                counts[cid] = counts.get(cid, 0) + 1
                y0, x0 = rng.integers(0, 6, 2)
                h, w = rng.integers(2, 6, 2)
                records.append(make_record(
                    cid, counts[cid], rect_mask(12, 12, y0, x0, y0 + h, x0 + w)))
            imap = InstanceMap(width=12, height=12, instances=tuple(records))
            profile = encode_profile(imap)
            # per-pixel oracle: last painter wins
            visible = {}
            painted = np.zeros((12, 12), dtype=np.uint16)
            for idx in imap.paint_order:
                rec = imap.instances[idx]
                painted[rec.mask] = pack_value(rec.category_id, rec.instance_index)
            tasks = decode_tasks(profile)
            for t in tasks:
                assert np.array_equal(t.mask,
                                      painted == pack_value(t.category_id,
                                                            t.instance_index))
            decoded_values = {pack_value(t.category_id, t.instance_index)
                              for t in tasks}
            assert decoded_values == set(np.unique(painted)) - {0}

    def test_corrupt_value_raises(self):
        values = np.zeros((4, 4), dtype=np.uint16)
        values[1, 1] = 512  # multiple of 256: not packable
        with pytest.raises(CorruptProfileError):
            decode_tasks(GrayProfile.from_array(values))

    def test_value_count_bound(self):
        # distinct nonzero values <= number of instances
        cat1 = make_record(24, 1, rect_mask(8, 8, 0, 0, 8, 8))
        small = make_record(24, 2, rect_mask(8, 8, 0, 0, 4, 4))
        imap = InstanceMap(width=8, height=8, instances=(cat1, small))
        profile = encode_profile(imap)
        assert len(np.unique(profile.values)) <= 1 + len(imap.instances)


class TestProfileChannel:
    def test_endpoints_and_scale(self):
        values = np.array([[0, 5889], [65535, 1]], dtype=np.uint16)
        chan = profile_to_channel(GrayProfile.from_array(values))
        assert chan.dtype == np.float32
        assert chan[0, 0] == 0.0
        assert chan[1, 0] == 1.0
        assert chan[0, 1] == pytest.approx(5889 / 65535)

    def test_strictly_monotone_over_all_values(self):
        values = np.arange(65536, dtype=np.uint16).reshape(256, 256)
        chan = profile_to_channel(GrayProfile.from_array(values))
        flat = chan.ravel()
        assert (np.diff(flat) > 0).all()


class TestMaskRle:
    @given(st.integers(0, 2 ** 16 - 1), st.integers(1, 6), st.integers(1, 6))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, bits, h, w):
        rng = np.random.default_rng(bits)
        mask = rng.random((h, w)) < 0.4
        rle = mask_to_rle(mask)
        assert np.array_equal(rle_to_mask(rle), mask)

    def test_first_count_is_zeros(self):
        mask = np.array([[1, 1, 0, 0]], dtype=bool)
        assert mask_to_rle(mask)["counts"] == [0, 2, 2]
