import struct

import numpy as np
import pytest

from pointlk import data
from pointlk import geometry as geo
from pointlk.pointnet import random_params

from conftest import random_cloud


class TestLoadOff:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "tri.off"
        path.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
        cloud = data.load_off(path)
        assert np.array_equal(cloud, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])

    def test_counts_glued_to_header(self, tmp_path):
        path = tmp_path / "glued.off"
        path.write_text("OFF2 0 0\n1 2 3\n4 5 6\n")
        assert data.load_off(path).shape == (2, 3)

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "comments.off"
        path.write_text("# generated\nOFF\n\n2 0 0\n0 0 0  # origin\n1 1 1\n")
        assert data.load_off(path).shape == (2, 3)

    def test_vertex_count_mismatch(self, tmp_path):
        path = tmp_path / "short.off"
        path.write_text("OFF\n5 0 0\n0 0 0\n1 0 0\n")
        with pytest.raises(data.OffParseError):
            data.load_off(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "noheader.off"
        path.write_text("3 0 0\n0 0 0\n1 0 0\n0 1 0\n")
        with pytest.raises(data.OffParseError) as info:
            data.load_off(path)
        assert info.value.line == 1

    def test_bad_coordinate_reports_line(self, tmp_path):
        path = tmp_path / "bad.off"
        path.write_text("OFF\n2 0 0\n0 0 0\n1 x 1\n")
        with pytest.raises(data.OffParseError) as info:
            data.load_off(path)
        assert info.value.line == 4

    def test_round_trip_preserves_coordinates(self, tmp_path, rng):
        cloud = random_cloud(rng, 1000, scale=5.0)
        path = tmp_path / "rt.off"
        data.write_off(path, cloud)
        assert np.array_equal(data.load_off(path), cloud)


class TestNormalizeUnitCube:
    def test_cube_corners(self):
        corners = np.array(
            [[x, y, z] for x in (0.0, 2.0) for y in (0.0, 2.0) for z in (0.0, 2.0)]
        )
        got = data.normalize_unit_cube(corners)
        assert set(map(tuple, got.tolist())) == set(
            (x, y, z) for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)
        )

    def test_single_point_centers(self):
        assert np.array_equal(
            data.normalize_unit_cube([[3.0, -7.0, 2.0]]), [[0.5, 0.5, 0.5]]
        )

    def test_zero_extent_axis_centered(self):
        flat = np.array([[0.0, 5.0, 1.0], [2.0, 5.0, 0.0]])
        got = data.normalize_unit_cube(flat)
        assert np.all(got[:, 1] == 0.5)

    def test_bbox_property(self, rng):
        cloud = random_cloud(rng, 200, scale=13.0)
        got = data.normalize_unit_cube(cloud)
        assert got.min() >= 0.0 and got.max() <= 1.0
        extent = got.max(axis=0) - got.min(axis=0)
        assert abs(extent.max() - 1.0) < 1e-12


class TestResample:
    def test_same_size_is_identity(self, rng):
        cloud = random_cloud(rng, 10)
        out = data.resample(cloud, 10, np.random.default_rng(0))
        assert np.array_equal(out, cloud)

    def test_downsample_is_subset(self, rng):
        cloud = random_cloud(rng, 10)
        out = data.resample(cloud, 4, np.random.default_rng(0))
        rows = set(map(tuple, cloud.tolist()))
        assert len(out) == 4
        assert all(tuple(p) in rows for p in out.tolist())
        assert len(set(map(tuple, out.tolist()))) == 4  # without replacement

    def test_upsample_members_of_input(self, rng):
        cloud = random_cloud(rng, 4)
        out = data.resample(cloud, 10, np.random.default_rng(0))
        rows = set(map(tuple, cloud.tolist()))
        assert len(out) == 10
        assert all(tuple(p) in rows for p in out.tolist())

    def test_seeded_determinism(self, rng):
        cloud = random_cloud(rng, 50)
        a = data.resample(cloud, 20, np.random.default_rng(7))
        b = data.resample(cloud, 20, np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestMakePair:
    def test_zero_angle_zero_translation(self, rng):
        template = random_cloud(rng, 32)
        spec = data.PairSpec(initial_angle_deg=0.0, translation_bound=0.0, seed=1, n_points=32)
        template_out, source, gt = data.make_pair(template, spec)
        assert np.max(np.abs(gt - np.eye(4))) < 1e-12
        assert sorted(map(tuple, source.tolist())) == sorted(map(tuple, template_out.tolist()))

    def test_angle_is_exact(self, rng):
        template = random_cloud(rng, 16)
        spec = data.PairSpec(initial_angle_deg=90.0, seed=5, n_points=16)
        _, _, gt = data.make_pair(template, spec)
        rot_err, _ = geo.registration_error(gt, np.eye(4))
        assert abs(rot_err - 90.0) < 1e-9

    def test_translation_within_bound(self, rng):
        template = random_cloud(rng, 16)
        for seed in range(10):
            spec = data.PairSpec(initial_angle_deg=0.0, translation_bound=0.3, seed=seed, n_points=16)
            _, _, gt = data.make_pair(template, spec)
            forward = geo.inverse(gt)
            assert np.all(forward[:3, 3] >= 0.0) and np.all(forward[:3, 3] < 0.3)

    def test_fixed_seed_bitwise_reproducible(self, rng):
        template = random_cloud(rng, 64)
        spec = data.PairSpec(initial_angle_deg=42.0, seed=11, n_points=48)
        a = data.make_pair(template, spec)
        b = data.make_pair(template, spec)
        for left, right in zip(a, b):
            assert np.array_equal(left, right)

    def test_gt_maps_source_onto_template_with_shared_indices(self, rng):
        template = random_cloud(rng, 64)
        spec = data.PairSpec(
            initial_angle_deg=30.0, seed=3, n_points=48, independent_resample=False
        )
        template_out, source, gt = data.make_pair(template, spec)
        assert np.max(np.abs(geo.apply(gt, source) - template_out)) < 1e-9

    def test_angle_bounds_validated(self):
        with pytest.raises(ValueError):
            data.PairSpec(initial_angle_deg=91.0)


class TestSyntheticShapes:
    def test_known_kinds_and_determinism(self):
        for kind in data.SHAPE_KINDS:
            a = data.synthetic_shape(kind, 40, seed=2)
            b = data.synthetic_shape(kind, 40, seed=2)
            assert a.shape == (40, 3)
            assert np.array_equal(a, b)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            data.synthetic_shape("dodecahedron", 10)

    def test_corpus_writer(self, tmp_path):
        paths = data.write_synthetic_corpus(tmp_path, count=3, vertices=16, seed=0)
        assert len(paths) == 3
        for path in paths:
            assert data.load_off(path).shape == (16, 3)


class TestWeightBlob:
    def test_round_trip_bitwise(self, tmp_path):
        params = random_params(5)
        path = tmp_path / "weights.blob"
        data.write_weights(path, params)
        loaded, meta = data.read_weights(path)
        assert meta.version == data.BLOB_VERSION
        assert meta.width_bits == 64
        assert meta.qformat_n == 0
        for original, parsed in zip(params.layers, loaded.layers):
            assert np.array_equal(original.weight, parsed.weight)
            assert np.array_equal(original.bias, parsed.bias)
            assert np.array_equal(original.bn_var, parsed.bn_var)
            assert original.epsilon == parsed.epsilon

    def test_float32_round_trip_at_declared_width(self):
        params = random_params(6)
        blob = data.build_weight_blob(params, width_bits=32)
        loaded, meta = data.parse_weight_blob(blob)
        assert meta.width_bits == 32
        # Values survive exactly at the declared 32-bit width.
        again = data.build_weight_blob(loaded, width_bits=32)
        assert blob == again

    def test_corrupt_byte_fails_checksum(self):
        blob = bytearray(data.build_weight_blob(random_params(1)))
        blob[100] ^= 0xFF
        with pytest.raises(data.WeightBlobChecksumError):
            data.parse_weight_blob(bytes(blob))

    def test_newer_major_version_rejected(self):
        blob = bytearray(data.build_weight_blob(random_params(1)))
        blob[4:6] = struct.pack("<H", data.BLOB_VERSION[0] + 1)
        # Refresh the checksum so only the version check can fire.
        import zlib

        blob[-4:] = struct.pack("<I", zlib.crc32(bytes(blob[:-4])))
        with pytest.raises(data.WeightBlobVersionError):
            data.parse_weight_blob(bytes(blob))

    def test_truncated_blob_rejected(self):
        blob = data.build_weight_blob(random_params(1))
        with pytest.raises(data.WeightBlobError):
            data.parse_weight_blob(blob[: len(blob) // 3])

    def test_bad_magic_rejected(self):
        blob = data.build_weight_blob(random_params(1))
        with pytest.raises(data.WeightBlobError):
            data.parse_weight_blob(b"XXXX" + blob[4:])

    def test_layout_is_little_endian_pinned(self):
        params = random_params(2)
        blob = data.build_weight_blob(params, qformat_n=12)
        assert blob[:4] == b"PNWB"
        major, minor, width_code, qn, layers = struct.unpack("<HHBBH", blob[4:12])
        assert (major, minor) == data.BLOB_VERSION
        assert qn == 12
        assert layers == 5
        k, l = struct.unpack_from("<II", blob, 12)
        assert (k, l) == (3, 64)
        first_weight = struct.unpack_from("<d", blob, 20)[0]
        assert first_weight == params.layers[0].weight[0, 0]
