import json

import numpy as np
import pytest

from relightkit import renderer, sh, synthgen
from relightkit.errors import InvalidInputError


class TestMakeScene:
    def test_sphere_apex_normal(self):
        spec = synthgen.SceneSpec(geometry="sphere", albedo="flat", size=64, seed=1)
        scene = synthgen.make_scene(spec)
        assert np.allclose(scene.normals.data[32, 32], (0, 0, 1), atol=1e-12)

    def test_sphere_mask_fraction(self):
        size = 64
        spec = synthgen.SceneSpec(geometry="sphere", albedo="flat", size=size, seed=1,
                                  geometry_params={"radius_frac": 1.0})
        scene = synthgen.make_scene(spec)
        frac = scene.mask.count / size ** 2
        assert abs(frac - np.pi / 4) < 2.0 / size

    def test_flat_heightfield_points_up(self):
        spec = synthgen.SceneSpec(geometry="heightfield", albedo="flat", size=16,
                                  seed=2, geometry_params={"amplitude": 0.0})
        scene = synthgen.make_scene(spec)
        assert np.allclose(scene.normals.data[..., 2], 1.0, atol=1e-12)

    @pytest.mark.parametrize("geometry", synthgen.GEOMETRIES)
    def test_normals_unit_on_mask(self, geometry):
        spec = synthgen.SceneSpec(geometry=geometry, albedo="checker", size=32, seed=3)
        scene = synthgen.make_scene(spec)
        norms = np.linalg.norm(scene.normals.data[scene.mask.bits], axis=-1)
        assert np.abs(norms - 1.0).max() < 1e-7

    @pytest.mark.parametrize("pattern", synthgen.ALBEDO_PATTERNS)
    def test_albedo_bounded(self, pattern):
        spec = synthgen.SceneSpec(geometry="sphere", albedo=pattern, size=32, seed=4)
        scene = synthgen.make_scene(spec)
        assert scene.albedo.data.min() >= synthgen.ALBEDO_RANGE[0]
        assert scene.albedo.data.max() <= synthgen.ALBEDO_RANGE[1]

    def test_degenerate_spec_rejected(self):
        with pytest.raises(InvalidInputError):
            synthgen.make_scene(synthgen.SceneSpec(
                geometry="sphere", albedo="flat", size=32, seed=0,
                geometry_params={"radius_frac": 0.0}))
        with pytest.raises(InvalidInputError):
            synthgen.SceneSpec(geometry="sphere", albedo="flat", size=4, seed=0)
        with pytest.raises(InvalidInputError):
            synthgen.SceneSpec(geometry="cube", albedo="flat", size=32, seed=0)

    def test_deterministic(self):
        spec = synthgen.SceneSpec(geometry="heightfield", albedo="two-tone",
                                  size=24, seed=9)
        a = synthgen.make_scene(spec)
        b = synthgen.make_scene(spec)
        assert np.array_equal(a.albedo.data, b.albedo.data)
        assert np.array_equal(a.normals.data, b.normals.data)


class TestSampleLighting:
    def test_configuration_collapse_to_uniform_white(self):
        light = synthgen.sample_lighting(
            np.random.default_rng(0), intensity_range=(1.0, 1.0),
            direction_strength=(0.0, 0.0), quad_strength=0.0, color_jitter=0.0)
        expect = np.zeros((9, 3))
        expect[0] = 1.0 / sh.C4
        assert np.allclose(light.coeffs, expect, atol=1e-12)

    def test_sphere_shading_mostly_nonnegative(self):
        rng = np.random.default_rng(123)
        normals, mask = synthgen._sphere(32, {"radius_frac": 1.0})
        for _ in range(20):
            light = synthgen.sample_lighting(rng)
            s = renderer.shading_values(normals, light.coeffs)[mask]
            frac = (s.min(axis=-1) >= 0).mean()
            assert frac >= 0.95

    def test_seed_determinism(self):
        l1 = synthgen.sample_lighting(np.random.default_rng(42))
        l2 = synthgen.sample_lighting(np.random.default_rng(42))
        assert np.array_equal(l1.coeffs, l2.coeffs)


class TestGenerateDataset:
    def test_manifest_shape(self, tmp_path):
        manifest = synthgen.generate_dataset(1, 5, tmp_path / "d", seed=0, size=16)
        assert manifest["version"] == "v1"
        assert len(manifest["scenes"]) == 1
        assert len(manifest["scenes"][0]["lightings"]) == 5
        assert all(len(row) == 27 for row in manifest["scenes"][0]["lightings"])

    def test_exact_render_invariant(self, tmp_path):
        synthgen.generate_dataset(4, 3, tmp_path / "d", seed=5, size=24)
        samples, _ = synthgen.load_dataset(tmp_path / "d")
        for s in samples:
            for img, light in zip(s.images, s.lightings):
                re = renderer.render_values(s.albedo.data, s.normals.data,
                                            light.coeffs, s.mask.bits)
                assert np.abs(re - img.data).max() <= 2.0 / 65535

    def test_renders_in_gamut(self, tmp_path):
        synthgen.generate_dataset(4, 4, tmp_path / "d", seed=6, size=24)
        samples, _ = synthgen.load_dataset(tmp_path / "d")
        for s in samples:
            for img in s.images:
                assert img.data.min() >= 0.0
                assert img.data.max() <= 1.0

    def test_shared_components(self, tmp_path):
        synthgen.generate_dataset(2, 3, tmp_path / "d", seed=7, size=16)
        samples, _ = synthgen.load_dataset(tmp_path / "d")
        # all K images of one sample reference the same albedo/normal buffers
        for s in samples:
            assert len(s.images) == 3
            assert s.albedo.data.shape == (16, 16, 3)

    def test_byte_determinism(self, tmp_path):
        import filecmp
        synthgen.generate_dataset(2, 3, tmp_path / "a", seed=11, size=16)
        synthgen.generate_dataset(2, 3, tmp_path / "b", seed=11, size=16)
        cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")

        def assert_equal(c):
            assert not c.diff_files and not c.left_only and not c.right_only
            for sub in c.subdirs.values():
                assert_equal(sub)

        assert_equal(cmp)
        assert (tmp_path / "a/manifest.json").read_bytes() == \
               (tmp_path / "b/manifest.json").read_bytes()

    def test_seed_changes_data(self, tmp_path):
        synthgen.generate_dataset(1, 2, tmp_path / "a", seed=1, size=16)
        synthgen.generate_dataset(1, 2, tmp_path / "b", seed=2, size=16)
        a = json.loads((tmp_path / "a/manifest.json").read_text())
        b = json.loads((tmp_path / "b/manifest.json").read_text())
        assert a["scenes"][0]["lightings"] != b["scenes"][0]["lightings"]

    def test_invalid_args(self, tmp_path):
        with pytest.raises(InvalidInputError):
            synthgen.generate_dataset(0, 5, tmp_path / "x")
        with pytest.raises(InvalidInputError):
            synthgen.generate_dataset(1, 1, tmp_path / "x")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(OSError):
            synthgen.load_dataset(tmp_path)


class TestEnumeratePairs:
    def make(self, k):
        spec = synthgen.SceneSpec(geometry="sphere", albedo="flat", size=16, seed=0)
        return synthgen.build_sample(spec, k, np.random.default_rng(0))

    def test_all_pairs_choose_two(self):
        sample = self.make(4)
        pairs = synthgen.enumerate_pairs(sample, mode="all")
        assert len(pairs) == 6  # C(4, 2)
        assert len(set(pairs)) == 6

    def test_anchored(self):
        sample = self.make(5)
        pairs = synthgen.enumerate_pairs(sample, mode="anchored")
        assert pairs == [(0, 1), (0, 2), (0, 3), (0, 4)]

    def test_k2_either_mode(self):
        sample = self.make(2)
        assert synthgen.enumerate_pairs(sample, "all") == [(0, 1)]
        assert synthgen.enumerate_pairs(sample, "anchored") == [(0, 1)]

    def test_bad_mode(self):
        sample = self.make(2)
        with pytest.raises(InvalidInputError):
            synthgen.enumerate_pairs(sample, "ring")

    def test_k1_rejected(self):
        spec = synthgen.SceneSpec(geometry="sphere", albedo="flat", size=16, seed=0)
        with pytest.raises(InvalidInputError):
            synthgen.build_sample(spec, 1, np.random.default_rng(0))
